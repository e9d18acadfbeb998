"""Maximum-likelihood reconstruction of states and of measurement effects.

States are fitted with the RρR fixed-point iteration. Detector effects are
fitted with its dual, which rescales every iterate so the effects sum to the
identity. The log-likelihood is always evaluated on relative frequencies
(counts divided by the grand total), so convergence thresholds do not depend on
the number of shots.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from qspeed.config import TOL
from qspeed.dynamics import PAULI
from qspeed.qcore import DensityMatrix, PureState, ValidationError, as_cmatrix, dagger, psd_sqrt, tensor
from qspeed.swapnet import EffectSet

MAX_ITERATIONS = 10_000
LIKELIHOOD_GAIN_TOL = 1e-10
# per-step monotonicity slack for round-off
MONOTONE_SLACK = 1e-12

_S2 = 1.0 / math.sqrt(2.0)
# right circular taken as (H + iV)/sqrt(2)
SINGLE_QUBIT_PROBES = {
    "H": np.array([1, 0], dtype=complex),
    "V": np.array([0, 1], dtype=complex),
    "D": np.array([_S2, _S2], dtype=complex),
    "A": np.array([_S2, -_S2], dtype=complex),
    "R": np.array([_S2, 1j * _S2], dtype=complex),
    "L": np.array([_S2, -1j * _S2], dtype=complex),
}
# measurement basis -> the two polarization outcomes it resolves
BASIS_OUTCOMES = {"Z": ("H", "V"), "X": ("D", "A"), "Y": ("R", "L")}


def _product_vector(letters) -> np.ndarray:
    return reduce(np.kron, (SINGLE_QUBIT_PROBES[c] for c in letters))


@dataclass(frozen=True)
class ProbeSet:
    labels: tuple[str, ...]
    probes: tuple[PureState, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.probes) or not self.labels:
            raise ValidationError("need one label per probe and at least one probe")
        if len({p.dim for p in self.probes}) != 1:
            raise ValidationError("all probes must share one dimension")

    @classmethod
    def products(cls, n: int = 2, letters: str = "HVDARL") -> "ProbeSet":
        """All n-fold tensor products of the named single-qubit probes (36 for two qubits)."""
        for ch in letters:
            if ch not in SINGLE_QUBIT_PROBES:
                raise ValidationError(f"unknown probe letter {ch!r}")
        labels, probes = [], []
        for combo in itertools.product(letters, repeat=n):
            labels.append("".join(combo))
            probes.append(PureState(_product_vector(combo)))
        return cls(tuple(labels), tuple(probes))

    @property
    def dim(self) -> int:
        return self.probes[0].dim

    def densities(self) -> np.ndarray:
        return np.stack([p.projector() for p in self.probes])

    def rotated(self, u) -> "ProbeSet":
        u = as_cmatrix(u)
        return ProbeSet(self.labels, tuple(PureState.normalized(u @ p.amplitudes) for p in self.probes))


def pauli_settings(n: int = 2) -> dict[str, EffectSet]:
    """Product projective measurements in every basis from {X, Y, Z}^n, keyed like ``"XZ"``."""
    settings = {}
    for bases in itertools.product("XYZ", repeat=n):
        labels, effects = [], []
        for outs in itertools.product(*(BASIS_OUTCOMES[b] for b in bases)):
            labels.append("".join(outs))
            v = _product_vector(outs)
            effects.append(np.outer(v, v.conj()))
        settings["".join(bases)] = EffectSet(effects, labels)
    return settings


@dataclass
class TomographyResult:
    estimate: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def monotone(self) -> bool:
        h = self.history
        return all(b >= a - MONOTONE_SLACK for a, b in zip(h, h[1:]))


# --------------------------------------------------------------------------
# informational completeness


def _pauli_basis(d: int) -> tuple[list[str], np.ndarray]:
    n = int(round(math.log2(d)))
    if 2**n != d:
        raise ValidationError(f"dimension {d} is not a power of two")
    names, mats = [], []
    for combo in itertools.product("IXYZ", repeat=n):
        names.append("".join(combo))
        mats.append(tensor(*(np.eye(2) if c == "I" else PAULI[c.lower()] for c in combo)))
    return names, np.stack(mats)


def _require_complete(ops: np.ndarray, what: str) -> None:
    """Raise unless the real span of the Hermitian ``ops`` is all d x d Hermitian matrices."""
    d = ops.shape[-1]
    names, basis = _pauli_basis(d)
    coeff = np.real(np.einsum("kij,pji->kp", ops, basis))
    _, sv, vh = np.linalg.svd(coeff)
    rank = int(np.sum(sv > 1e-9 * max(sv[0], 1.0)))
    if rank == d * d:
        return
    null = vh[rank:]
    weight = np.sum(null**2, axis=0)
    missing = [nm for nm, w in zip(names, weight) if w > 1e-9]
    raise ValidationError(
        f"{what} is not informationally complete: rank {rank} of {d * d}; "
        f"unobservable Pauli span: {', '.join(missing)}"
    )


# --------------------------------------------------------------------------
# state tomography


def _flatten_state_data(counts: Mapping[str, Mapping[str, float]], settings: Mapping[str, EffectSet]):
    effects, n = [], []
    for s_label, outcome_counts in counts.items():
        if s_label not in settings:
            raise ValidationError(f"counts given for unknown setting {s_label!r}")
        es = settings[s_label]
        for o_label, c in outcome_counts.items():
            if o_label not in es.labels:
                raise ValidationError(f"unknown outcome {o_label!r} in setting {s_label!r}")
            if c < 0 or not math.isfinite(c):
                raise ValidationError(f"count for {s_label}/{o_label} must be finite and non-negative, got {c}")
            effects.append(es[o_label])
            n.append(float(c))
    if not effects:
        raise ValidationError("no counts given")
    n = np.array(n)
    if n.sum() <= 0:
        raise ValidationError("all counts are zero")
    return np.stack(effects), n / n.sum()


def _loglik(freqs: np.ndarray, probs: np.ndarray) -> float:
    mask = freqs > 0
    if np.any(probs[mask] <= 0):
        return -math.inf
    return float(np.sum(freqs[mask] * np.log(probs[mask])))


def _state_probs(rho: np.ndarray, effects: np.ndarray) -> np.ndarray:
    return np.real(np.einsum("kij,ji->k", effects, rho))


def _normalize_state(m: np.ndarray) -> np.ndarray:
    m = 0.5 * (m + dagger(m))
    return m / np.real(np.trace(m))


def mle_state(
    counts: Mapping[str, Mapping[str, float]],
    settings: Mapping[str, EffectSet],
    max_iter: int = MAX_ITERATIONS,
    tol: float = LIKELIHOOD_GAIN_TOL,
    rho0=None,
) -> TomographyResult:
    """RρR reconstruction from counts keyed by setting then outcome label.

    A full RρR step is taken whenever it does not lower the likelihood.
    Otherwise the step is diluted, ``(I + eps R) rho (I + eps R)``, halving
    ``eps`` until the likelihood stops decreasing. Small enough dilution
    always ascends, so the recorded likelihood sequence is monotone.
    """
    effects, freqs = _flatten_state_data(counts, settings)
    _require_complete(effects, "measurement set")
    d = effects.shape[-1]
    rho = np.eye(d, dtype=complex) / d if rho0 is None else _normalize_state(as_cmatrix(rho0))
    ll = _loglik(freqs, _state_probs(rho, effects))
    history = [ll]
    eye = np.eye(d)
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        probs = _state_probs(rho, effects)
        w = np.divide(freqs, probs, out=np.zeros_like(freqs), where=freqs > 0)
        R = np.einsum("k,kij->ij", w, effects)
        new = _normalize_state(R @ rho @ R)
        new_ll = _loglik(freqs, _state_probs(new, effects))
        eps = 1.0
        while new_ll < ll - MONOTONE_SLACK and eps > 1e-12:
            eps /= 2
            G = eye + eps * R
            new = _normalize_state(G @ rho @ G)
            new_ll = _loglik(freqs, _state_probs(new, effects))
        if new_ll < ll - MONOTONE_SLACK:
            # no ascent direction left at machine precision
            converged = True
            it -= 1
            break
        gain = new_ll - ll
        rho, ll = new, new_ll
        history.append(ll)
        if gain < tol:
            converged = True
            break
    return TomographyResult(rho, ll, it, converged, history)


def state_probabilities(rho, settings: Mapping[str, EffectSet]) -> dict[str, dict[str, float]]:
    """Exact outcome probabilities, in the count layout :func:`mle_state` accepts."""
    r = np.asarray(rho, dtype=complex)
    return {
        s: {lab: float(np.real(np.trace(e @ r))) for lab, e in zip(es.labels, es.effects)}
        for s, es in settings.items()
    }


def sample_state_counts(rho, settings: Mapping[str, EffectSet], shots: int, seed: int) -> dict[str, dict[str, int]]:
    """Multinomial counts with ``shots`` per setting; settings are drawn in key order."""
    rng = np.random.default_rng(seed)
    out = {}
    for s, probs in state_probabilities(rho, settings).items():
        p = np.clip(np.array(list(probs.values())), 0.0, None)
        draws = rng.multinomial(shots, p / p.sum())
        out[s] = {lab: int(c) for lab, c in zip(probs, draws)}
    return out


# --------------------------------------------------------------------------
# detector tomography


def _detector_matrix(
    probe_counts: Mapping[str, Mapping[str, float]], probes: ProbeSet, outcomes: Sequence[str]
) -> np.ndarray:
    n = np.zeros((len(probes.labels), len(outcomes)))
    for i, pl in enumerate(probes.labels):
        if pl not in probe_counts:
            raise ValidationError(f"no counts for probe {pl!r}")
        row = probe_counts[pl]
        for k, ol in enumerate(outcomes):
            c = float(row.get(ol, 0.0))
            if c < 0 or not math.isfinite(c):
                raise ValidationError(f"count for {pl}/{ol} must be finite and non-negative, got {c}")
            n[i, k] = c
    if n.sum() <= 0:
        raise ValidationError("all counts are zero")
    return n / n.sum()


def _complete_effects(es: np.ndarray) -> np.ndarray:
    """Rescale so the effects sum to I: E_k -> L^{-1/2} E_k L^{-1/2} with L = sum E_k."""
    lam = np.sum(es, axis=0)
    w, v = np.linalg.eigh(0.5 * (lam + dagger(lam)))
    if w[0] <= 0:
        raise ArithmeticError("effect sum became singular during detector reconstruction")
    inv_sqrt = (v / np.sqrt(w)) @ dagger(v)
    out = inv_sqrt @ es @ inv_sqrt
    return 0.5 * (out + np.conj(np.swapaxes(out, -1, -2)))


def _detector_probs(rhos: np.ndarray, es: np.ndarray) -> np.ndarray:
    return np.real(np.einsum("jab,kba->jk", rhos, es))


def mle_detector(
    probe_counts: Mapping[str, Mapping[str, float]],
    outcomes: Sequence[str],
    probes: ProbeSet | None = None,
    max_iter: int = MAX_ITERATIONS,
    tol: float = LIKELIHOOD_GAIN_TOL,
) -> list[TomographyResult]:
    """Reconstruct K effects from counts keyed by probe label then outcome label.

    Each update is ``E_k <- L^{-1/2} R_k E_k R_k L^{-1/2}`` with
    ``R_k = sum_j (f_jk / p_jk) rho_j``, so completeness holds after every
    step. The same dilution fallback as :func:`mle_state` keeps the likelihood
    monotone. All returned results share the joint log-likelihood.
    """
    probes = probes or ProbeSet.products(2)
    outcomes = list(outcomes)
    if len(outcomes) < 2:
        raise ValidationError("need at least two outcomes")
    rhos = probes.densities()
    _require_complete(rhos, "probe set")
    freqs = _detector_matrix(probe_counts, probes, outcomes)
    d, K = probes.dim, len(outcomes)
    es = np.stack([np.eye(d, dtype=complex) / K] * K)
    ll = _loglik(freqs.ravel(), _detector_probs(rhos, es).ravel())
    history = [ll]
    eye = np.eye(d)
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        p = _detector_probs(rhos, es)
        w = np.divide(freqs, p, out=np.zeros_like(freqs), where=freqs > 0)
        R = np.einsum("jk,jab->kab", w, rhos)
        eps = None
        new = _complete_effects(R @ es @ R)
        new_ll = _loglik(freqs.ravel(), _detector_probs(rhos, new).ravel())
        if new_ll < ll - MONOTONE_SLACK:
            # R is scaled so that sum_k Tr(R_k E_k) = 1; dilute around the identity
            eps = 1.0
            while new_ll < ll - MONOTONE_SLACK and eps > 1e-12:
                eps /= 2
                G = eye + eps * R
                new = _complete_effects(G @ es @ G)
                new_ll = _loglik(freqs.ravel(), _detector_probs(rhos, new).ravel())
        if new_ll < ll - MONOTONE_SLACK:
            converged = True
            it -= 1
            break
        gain = new_ll - ll
        es, ll = new, new_ll
        history.append(ll)
        if gain < tol:
            converged = True
            break
    return [TomographyResult(e, ll, it, converged, history) for e in es]


def detector_probabilities(effects: Sequence, probes: ProbeSet, labels: Sequence[str]) -> dict[str, dict[str, float]]:
    """Exact click probabilities per probe, in the layout :func:`mle_detector` accepts."""
    es = np.stack([as_cmatrix(e) for e in effects])
    p = _detector_probs(probes.densities(), es)
    return {pl: {ol: float(p[j, k]) for k, ol in enumerate(labels)} for j, pl in enumerate(probes.labels)}


# --------------------------------------------------------------------------
# figures of merit and I/O


def operator_fidelity(a, b) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(a) b sqrt(a)))^2 of the trace-normalized operators.

    Slightly negative eigenvalues from rounded inputs are clipped.
    """
    ma, mb = as_cmatrix(a), as_cmatrix(b)
    if ma.shape != mb.shape:
        raise ValidationError(f"dimension mismatch: {ma.shape} vs {mb.shape}")
    ta, tb = float(np.real(np.trace(ma))), float(np.real(np.trace(mb)))
    if ta <= TOL.validation or tb <= TOL.validation:
        raise ValidationError("operator_fidelity needs operators with positive trace")
    sa = psd_sqrt(ma / ta)
    inner = psd_sqrt(sa @ (mb / tb) @ sa)
    return float(min(max(np.real(np.trace(inner)) ** 2, 0.0), 1.0))


def load_counts(path) -> dict[str, dict[str, float]]:
    """Read a count file: a JSON object mapping setting or probe labels to ``{outcome: count}``."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict) or not all(isinstance(v, dict) for v in doc.values()):
        raise ValidationError(f"{path}: expected an object of objects")
    return {str(k): {str(o): float(c) for o, c in v.items()} for k, v in doc.items()}


def save_counts(path, counts: Mapping[str, Mapping[str, float]]) -> None:
    Path(path).write_text(json.dumps(counts, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def density_estimate(result: TomographyResult) -> DensityMatrix:
    return DensityMatrix.repair(result.estimate)
