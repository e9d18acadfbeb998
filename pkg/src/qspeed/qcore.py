"""Complex Hermitian linear algebra and validated quantum-state types.

Matrices are plain ``numpy`` complex arrays. :class:`DensityMatrix` and
:class:`PureState` wrap them with validation and are immutable after
construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property, reduce
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from qspeed.config import TOL


class ValidationError(ValueError):
    """Raised when an input violates a numerical precondition."""


def as_cmatrix(m) -> np.ndarray:
    """Return ``m`` as a square complex128 array, validating its shape."""
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValidationError(f"expected a non-empty square matrix, got shape {a.shape}")
    return a


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def hermitian_deviation(m) -> float:
    a = as_cmatrix(m)
    return float(np.max(np.abs(a - dagger(a))))


def require_hermitian(m, tol: float = TOL.validation, what: str = "matrix") -> np.ndarray:
    a = as_cmatrix(m)
    dev = hermitian_deviation(a)
    if dev > tol:
        raise ValidationError(f"{what} is not Hermitian: max deviation |m - m^dagger| = {dev:.3e} > {tol:.1e}")
    return a


def require_unitary(u, tol: float = TOL.validation, what: str = "matrix") -> np.ndarray:
    a = as_cmatrix(u)
    dev = float(np.max(np.abs(a @ dagger(a) - np.eye(a.shape[0]))))
    if dev > tol:
        raise ValidationError(f"{what} is not unitary: max |U U^dagger - I| = {dev:.3e} > {tol:.1e}")
    return a


# --------------------------------------------------------------------------
# spectra


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues in descending order with matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ dagger(v)

    def __iter__(self):
        return iter((self.eigenvalues, self.eigenvectors))


def _phase_fix(v: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    for c in v:
        if abs(c) > tol:
            return v * (np.conj(c) / abs(c))
    return v


def _lex_key(v: np.ndarray) -> tuple:
    # rounding keeps near-identical vectors from flipping order on float noise
    r = np.round(np.column_stack([v.real, v.imag]).ravel(), 10)
    return tuple(-r)


def eig_hermitian(m, tol: float = TOL.validation) -> Spectrum:
    """Eigendecomposition of a Hermitian matrix with a deterministic layout.

    Eigenvalues are sorted in descending order. Each eigenvector is phase-fixed
    so its first non-negligible component is real and positive; eigenvalues tied
    within ``tol`` are ordered by descending lexicographic order of their
    (phase-fixed) eigenvectors.
    """
    a = require_hermitian(m, tol)
    a = 0.5 * (a + dagger(a))
    w, v = np.linalg.eigh(a)
    w = w[::-1]
    v = v[:, ::-1]
    cols = [_phase_fix(v[:, k]) for k in range(len(w))]

    order: list[int] = []
    start = 0
    while start < len(w):
        stop = start + 1
        while stop < len(w) and abs(w[stop] - w[start]) <= tol:
            stop += 1
        group = sorted(range(start, stop), key=lambda k: _lex_key(cols[k]))
        order.extend(group)
        start = stop

    values = np.array([w[k] for k in order], dtype=float)
    vectors = np.column_stack([cols[k] for k in order])
    return Spectrum(values, vectors)


def psd_sqrt(m) -> np.ndarray:
    """Square root of a Hermitian matrix, clipping negative eigenvalues to zero."""
    a = as_cmatrix(m)
    w, v = np.linalg.eigh(0.5 * (a + dagger(a)))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ dagger(v)


# --------------------------------------------------------------------------
# state types


class PureState:
    """Normalized state vector."""

    def __init__(self, amplitudes, tol: float = TOL.pure_norm):
        psi = np.array(amplitudes, dtype=np.complex128).ravel()
        if psi.size < 1:
            raise ValidationError("empty state vector")
        norm = float(np.linalg.norm(psi))
        if abs(norm - 1.0) > tol:
            raise ValidationError(f"state vector norm {norm!r} differs from 1 by more than {tol:.1e}")
        psi.setflags(write=False)
        self._amps = psi

    @classmethod
    def normalized(cls, amplitudes) -> "PureState":
        psi = np.asarray(amplitudes, dtype=np.complex128).ravel()
        return cls(psi / np.linalg.norm(psi))

    @property
    def amplitudes(self) -> np.ndarray:
        return self._amps

    @property
    def dim(self) -> int:
        return self._amps.size

    def projector(self) -> np.ndarray:
        return np.outer(self._amps, np.conj(self._amps))

    def density(self) -> "DensityMatrix":
        return DensityMatrix(self.projector())

    def __repr__(self) -> str:
        return f"PureState(dim={self.dim})"


class DensityMatrix:
    """A validated quantum state: Hermitian, unit trace, positive semidefinite.

    The spectrum is computed lazily on first access. Concurrent first accesses
    may each compute it, but every computation yields the same result.
    """

    def __init__(self, mat, tol: float = TOL.validation):
        a = require_hermitian(mat, tol, "density matrix")
        tr = np.trace(a)
        if abs(tr - 1.0) > tol:
            raise ValidationError(f"density matrix trace {tr.real:.12g} differs from 1 by more than {tol:.1e}")
        a = 0.5 * (a + dagger(a))
        a.setflags(write=False)
        self._mat = a
        lam_min = float(self.spectrum.eigenvalues[-1])
        if lam_min < -tol:
            raise ValidationError(f"density matrix is not PSD: minimum eigenvalue {lam_min:.3e}")

    @classmethod
    def repair(cls, mat) -> "DensityMatrix":
        """Explicitly project a near-state onto the state space.

        Hermitizes, clips negative eigenvalues and renormalizes the trace. Meant
        for experimentally reconstructed matrices; never applied implicitly.
        """
        a = as_cmatrix(mat)
        a = 0.5 * (a + dagger(a))
        w, v = np.linalg.eigh(a)
        w = np.clip(w, 0.0, None)
        if w.sum() <= 0:
            raise ValidationError("cannot repair a matrix with no positive spectrum")
        return cls((v * (w / w.sum())) @ dagger(v))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim) / dim)

    @property
    def mat(self) -> np.ndarray:
        return self._mat

    @property
    def dim(self) -> int:
        return self._mat.shape[0]

    @cached_property
    def spectrum(self) -> Spectrum:
        return eig_hermitian(self._mat)

    def clipped_eigenvalues(self, tol: float = TOL.validation) -> np.ndarray:
        """Eigenvalues with entries in ``[-tol, 0)`` set to zero."""
        lam = self.spectrum.eigenvalues.copy()
        lam[(lam < 0) & (lam >= -tol)] = 0.0
        return lam

    @property
    def purity(self) -> float:
        return hs_overlap(self, self)

    def __array__(self, dtype=None, copy=None):
        return self._mat if dtype is None else self._mat.astype(dtype)

    def __repr__(self) -> str:
        return f"DensityMatrix(dim={self.dim})"


StateLike = Union[DensityMatrix, np.ndarray]


def _mat(x) -> np.ndarray:
    if isinstance(x, DensityMatrix):
        return x.mat
    if isinstance(x, PureState):
        return x.projector()
    return as_cmatrix(x)


def _vec(x) -> np.ndarray:
    if isinstance(x, PureState):
        return x.amplitudes
    return np.asarray(x, dtype=np.complex128).ravel()


# --------------------------------------------------------------------------
# composition


def tensor(*ms) -> np.ndarray:
    """Kronecker product, first factor most significant."""
    if not ms:
        raise ValueError("tensor() needs at least one factor")
    return reduce(np.kron, (_mat(m) for m in ms))


def _check_dims(m: np.ndarray, dims: Sequence[int]) -> None:
    if int(np.prod(dims)) != m.shape[0]:
        raise ValidationError(f"subsystem dims {list(dims)} do not multiply to matrix dim {m.shape[0]}")


def partial_trace(m, dims: Sequence[int], keep) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep``.

    Kept subsystems appear in their original order.
    """
    a = _mat(m)
    dims = [int(d) for d in dims]
    _check_dims(a, dims)
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise ValidationError(f"keep indices {keep} out of range for {len(dims)} subsystems")
    n = len(dims)
    t = a.reshape(dims + dims)
    traced = [i for i in range(n) if i not in keep]
    # contract each traced pair, highest index first so axis numbers stay valid
    for i in sorted(traced, reverse=True):
        cur = t.ndim // 2
        t = np.trace(t, axis1=i, axis2=i + cur)
    dk = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(dk, dk)


def permute_subsystems(m, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors: output factor ``j`` is input factor ``perm[j]``."""
    a = _mat(m)
    dims = [int(d) for d in dims]
    _check_dims(a, dims)
    perm = list(perm)
    if sorted(perm) != list(range(len(dims))):
        raise ValidationError(f"{perm} is not a permutation of {len(dims)} subsystems")
    n = len(dims)
    t = a.reshape(dims + dims).transpose(perm + [n + p for p in perm])
    return t.reshape(a.shape)


# --------------------------------------------------------------------------
# scalar functionals


def hs_overlap(rho: StateLike, sigma: StateLike) -> float:
    """Hilbert-Schmidt overlap Tr(rho sigma); the purity when both arguments agree."""
    a, b = _mat(rho), _mat(sigma)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.real(np.vdot(a, b)))


def fidelity_pure(psi, rho: StateLike) -> float:
    """<psi|rho|psi>. This is the squared convention (no square root)."""
    v = _vec(psi)
    a = _mat(rho)
    if v.size != a.shape[0]:
        raise ValidationError(f"dimension mismatch: vector {v.size} vs matrix {a.shape[0]}")
    return float(np.real(np.vdot(v, a @ v)))


def trace_distance(a, b) -> float:
    """Half the trace norm of ``a - b`` for Hermitian arguments."""
    d = _mat(a) - _mat(b)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (d + dagger(d))))))


# --------------------------------------------------------------------------
# named states

_S2 = 1.0 / np.sqrt(2.0)
BELL_LABELS = ("phi+", "phi-", "psi+", "psi-")
_BELL = {
    "phi+": np.array([_S2, 0, 0, _S2], dtype=complex),
    "phi-": np.array([_S2, 0, 0, -_S2], dtype=complex),
    "psi+": np.array([0, _S2, _S2, 0], dtype=complex),
    "psi-": np.array([0, _S2, -_S2, 0], dtype=complex),
}


def bell_state(label: str) -> PureState:
    try:
        return PureState(_BELL[label])
    except KeyError:
        raise ValidationError(f"unknown Bell state {label!r}; expected one of {BELL_LABELS}") from None


def bell_mixture(p: float) -> DensityMatrix:
    """p |phi+><phi+| + (1 - p) |phi-><phi-|."""
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"mixing parameter {p} outside [0, 1]")
    return DensityMatrix(p * bell_state("phi+").projector() + (1 - p) * bell_state("phi-").projector())


def basis_vector(dim: int, k: int) -> np.ndarray:
    e = np.zeros(dim, dtype=complex)
    e[k] = 1.0
    return e


# --------------------------------------------------------------------------
# matrix JSON interchange: {"dim": n, "re": [[...]], "im": [[...]]}


def matrix_to_json(m) -> dict:
    a = _mat(m)
    return {"dim": int(a.shape[0]), "re": a.real.tolist(), "im": a.imag.tolist()}


def matrix_from_json(doc: dict) -> np.ndarray:
    try:
        dim = int(doc["dim"])
        re = np.asarray(doc["re"], dtype=float)
        im = np.asarray(doc.get("im", np.zeros_like(re)), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed matrix JSON: {exc}") from exc
    if re.shape != (dim, dim) or im.shape != (dim, dim):
        raise ValidationError(f"matrix JSON declares dim {dim} but holds shapes {re.shape} / {im.shape}")
    return re + 1j * im


def load_matrix(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        return matrix_from_json(json.load(fh))


def save_matrix(path, m) -> None:
    Path(path).write_text(json.dumps(matrix_to_json(m), indent=1) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# random instances for property checks


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a Ginibre matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return scale * 0.5 * (z + dagger(z))


def random_pure_state(dim: int, rng: np.random.Generator) -> PureState:
    return PureState.normalized(rng.standard_normal(dim) + 1j * rng.standard_normal(dim))


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    """Random state of the given rank (full rank by default), Hilbert-Schmidt style."""
    k = dim if rank is None else rank
    g = rng.standard_normal((dim, k)) + 1j * rng.standard_normal((dim, k))
    m = g @ dagger(g)
    return DensityMatrix(m / np.real(np.trace(m)))
