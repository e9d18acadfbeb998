"""Quantum Fisher informations for unitary phase encoding.

The family is indexed by symmetric, normalized operator-monotone functions
``f`` (Chentsov-Morozova functions). For ``rho = sum_i lam_i |i><i|``::

    I_f(rho, H) = 1/4 sum_ij (lam_i - lam_j)^2 / (lam_j f(lam_i/lam_j)) |<i|H|j>|^2

The SLD member (``f(x) = (1 + x)/2``) coincides with :func:`sldf`, which is
the smallest regular member; pure states saturate ``2 f(0) I_f = variance``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from qspeed.config import TOL
from qspeed.qcore import (
    DensityMatrix,
    ValidationError,
    dagger,
    eig_hermitian,
    require_hermitian,
)


class NonRegularMetricError(ValidationError):
    """The requested metric has f(0) = 0 and the state is rank deficient."""


@dataclass(frozen=True)
class CMFunction:
    name: str
    func: Callable[[np.ndarray], np.ndarray]
    f_at_zero: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.func(np.where(x > 0, x, 1.0)), dtype=float)
        return np.where(x > 0, out, self.f_at_zero)

    @property
    def regular(self) -> bool:
        return self.f_at_zero > 0

    def mean(self, a, b):
        """Scalar mean m_f(a, b) = b f(a/b), extended by continuity to b = 0."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        safe_b = np.where(b > 0, b, 1.0)
        return np.where(b > 0, safe_b * self(a / safe_b), a * self.f_at_zero)

    def c(self, x, y):
        """Metric coefficient c_f(x, y) = 1 / (y f(x/y))."""
        return 1.0 / self.mean(x, y)


SLD = CMFunction("sld", lambda x: (1.0 + x) / 2.0, 0.5)
WIGNER_YANASE = CMFunction("wigner-yanase", lambda x: ((1.0 + np.sqrt(x)) / 2.0) ** 2, 0.25)

BUILTIN = {f.name: f for f in (SLD, WIGNER_YANASE)}


def get_cm_function(name: str) -> CMFunction:
    try:
        return BUILTIN[name]
    except KeyError:
        raise ValidationError(f"unknown CM function {name!r}; built-ins are {sorted(BUILTIN)}") from None


@dataclass(frozen=True)
class QFIResult:
    value: float
    f_used: str

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class CMReport:
    normalization: float
    symmetry: float
    monotonicity: float
    positivity: float

    def ok(self, tol: float = 1e-10) -> bool:
        return max(self.normalization, self.symmetry, self.monotonicity, self.positivity) <= tol


DEFAULT_GRID = 2.0 ** np.arange(-10, 11)


def check_cm_function(f: CMFunction, grid: Sequence[float] | None = None) -> CMReport:
    """Sampled check of f(1) = 1, f(x) = x f(1/x) and monotonicity on ``grid``."""
    x = np.sort(np.asarray(DEFAULT_GRID if grid is None else grid, dtype=float))
    if np.any(x <= 0):
        raise ValidationError("grid must lie in (0, inf)")
    fx = f(x)
    norm = abs(float(f(np.array(1.0))) - 1.0)
    sym = float(np.max(np.abs(fx - x * f(1.0 / x))))
    mono = float(np.max(np.clip(fx[:-1] - fx[1:], 0.0, None))) if x.size > 1 else 0.0
    pos = float(np.max(np.clip(-fx, 0.0, None)))
    return CMReport(norm, sym, mono, pos)


# --------------------------------------------------------------------------


def _spectral_data(rho: DensityMatrix, H) -> tuple[np.ndarray, np.ndarray]:
    h = require_hermitian(H, what="Hamiltonian")
    if h.shape != rho.mat.shape:
        raise ValidationError(f"dimension mismatch: state {rho.mat.shape} vs Hamiltonian {h.shape}")
    lam, v = rho.spectrum
    lam = lam.copy()
    # clip the validation band and snap float noise around zero rank
    lam[lam <= TOL.degeneracy] = 0.0
    hij = dagger(v) @ h @ v
    return lam, np.abs(hij) ** 2


def qfi_f(rho: DensityMatrix, H, f: CMFunction = SLD) -> QFIResult:
    lam, h2 = _spectral_data(rho, H)
    li = lam[:, None]
    lj = lam[None, :]
    live = np.abs(li - lj) > TOL.degeneracy
    if not f.regular and np.any(live & ((li == 0) | (lj == 0)) & (h2 > 0)):
        raise NonRegularMetricError(
            f"non-regular metric: {f.name} has f(0) = 0 and the state has a zero eigenvalue "
            "coupled by the Hamiltonian"
        )
    denom = np.where(live, f.mean(li, lj), 1.0)
    terms = np.where(live, (li - lj) ** 2 / denom * h2, 0.0)
    return QFIResult(max(0.25 * float(terms.sum()), 0.0), f.name)


def sldf(rho: DensityMatrix, H) -> float:
    """SLD quantum Fisher information, 1/2 sum (l_i - l_j)^2/(l_i + l_j) |H_ij|^2."""
    lam, h2 = _spectral_data(rho, H)
    li = lam[:, None]
    lj = lam[None, :]
    live = np.abs(li - lj) > TOL.degeneracy
    s = np.where(live, li + lj, 1.0)
    return max(0.5 * float(np.sum(np.where(live, (li - lj) ** 2 / s * h2, 0.0))), 0.0)


def variance(rho: DensityMatrix, H) -> float:
    h = require_hermitian(H, what="Hamiltonian")
    r = rho.mat
    if h.shape != r.shape:
        raise ValidationError(f"dimension mismatch: state {r.shape} vs Hamiltonian {h.shape}")
    m1 = np.real(np.trace(r @ h))
    m2 = np.real(np.trace(r @ h @ h))
    return max(float(m2 - m1 * m1), 0.0)


# --------------------------------------------------------------------------
# covariant channels and ensemble constructions used by the monotonicity checks


def ensemble_embedding(states: Sequence[DensityMatrix], probs: Sequence[float]) -> DensityMatrix:
    """sum_mu p_mu rho_mu (x) |mu><mu| with the flag register as the last factor."""
    probs = np.asarray(probs, dtype=float)
    if len(states) != probs.size:
        raise ValidationError("states and probabilities differ in length")
    k = len(states)
    out = sum(p * np.kron(s.mat, np.diag(np.eye(k)[mu])) for mu, (p, s) in enumerate(zip(probs, states)))
    return DensityMatrix(out)


def eigenspace_projectors(H, tol: float = 1e-9) -> list[np.ndarray]:
    lam, v = eig_hermitian(H)
    projs = []
    start = 0
    while start < lam.size:
        stop = start + 1
        while stop < lam.size and abs(lam[stop] - lam[start]) <= tol:
            stop += 1
        block = v[:, start:stop]
        projs.append(block @ dagger(block))
        start = stop
    return projs


def dephase(rho, H) -> np.ndarray:
    """Pinching onto the eigenspaces of ``H``."""
    r = rho.mat if isinstance(rho, DensityMatrix) else np.asarray(rho)
    return sum(P @ r @ P for P in eigenspace_projectors(H))


def random_covariant_channel(H, rng: np.random.Generator, n_terms: int = 3) -> Callable:
    """A random convex mixture of maps that commute with exp(-iHt).

    Components are partial eigenspace dephasing and unitaries diagonal in the
    eigenbasis of ``H`` (which include exp(-iHs)).
    """
    lam, v = eig_hermitian(H)
    weights = rng.dirichlet(np.ones(n_terms))
    parts = []
    for _ in range(n_terms):
        kind = rng.integers(3)
        if kind == 0:
            q = rng.uniform()
            parts.append(lambda r, q=q: (1 - q) * r + q * dephase(r, H))
        elif kind == 1:
            s = rng.uniform(-np.pi, np.pi)
            u = (v * np.exp(-1j * lam * s)) @ dagger(v)
            parts.append(lambda r, u=u: u @ r @ dagger(u))
        else:
            # arbitrary phases on each eigenspace commute with the evolution
            u = sum(np.exp(1j * rng.uniform(0, 2 * np.pi)) * P for P in eigenspace_projectors(H))
            parts.append(lambda r, u=u: u @ r @ dagger(u))

    def channel(rho):
        r = rho.mat if isinstance(rho, DensityMatrix) else np.asarray(rho)
        return DensityMatrix(sum(w * phi(r) for w, phi in zip(weights, parts)))

    return channel
