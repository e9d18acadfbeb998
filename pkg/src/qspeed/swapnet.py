"""Two-copy overlap network simulated at the level of measurement statistics.

The overlap of two n-qubit states is the expectation of the swap operator on
their tensor product, and the swap factorizes into local swaps on each pair
of subsystem copies, ``V_i = I - 2 Pi(psi-)``. For two qubits A, B this gives::

    V = I - 2 Pi1(psi-) - 2 Pi2(psi-) + 4 Pi1(psi-) Pi2(psi-)

so purity and overlap follow from the singlet frequencies of two Bell
measurements (BSM1 on A1A2, BSM2 on B1B2).

Wire layouts: states are prepared copy-major, ``(A1 B1)(A2 B2)``; the Bell
measurements act pair-major, ``(A1 A2)(B1 B2)``. :func:`copies_to_pairs` is
the only place that permutation happens.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from qspeed.config import TOL
from qspeed.dynamics import SpinAxis, spin_half, unitary_of
from qspeed.fixtures import fixture_projectors
from qspeed.qcore import (
    BELL_LABELS,
    DensityMatrix,
    ValidationError,
    bell_state,
    dagger,
    permute_subsystems,
    tensor,
)
from qspeed.speed import DEFAULT_TAU, SpeedResult, speed_from_measurements

SINGLET = "psi-"


def singlet_projector() -> np.ndarray:
    return bell_state(SINGLET).projector()


def local_swap() -> np.ndarray:
    """Swap of two qubits written as I - 2 Pi(psi-)."""
    return np.eye(4, dtype=complex) - 2.0 * singlet_projector()


def copies_to_pairs(joint, n: int) -> np.ndarray:
    """Reorder a two-copy n-qubit operator from copy-major to pair-major wires."""
    perm = [k for i in range(n) for k in (i, n + i)]
    return permute_subsystems(joint, [2] * (2 * n), perm)


def pairs_to_copies(joint, n: int) -> np.ndarray:
    perm = [2 * i for i in range(n)] + [2 * i + 1 for i in range(n)]
    return permute_subsystems(joint, [2] * (2 * n), perm)


def global_swap(n: int) -> np.ndarray:
    """Swap of two n-qubit registers in pair-major layout: the product of local swaps."""
    return tensor(*([local_swap()] * n))


def overlap_via_swap(rho, sigma, n: int) -> float:
    """Tr(rho sigma) computed as the expectation of the factorized swap on rho (x) sigma."""
    a = rho.mat if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    b = sigma.mat if isinstance(sigma, DensityMatrix) else np.asarray(sigma, dtype=complex)
    if a.shape != (2**n, 2**n) or b.shape != a.shape:
        raise ValidationError(f"expected two {n}-qubit states, got shapes {a.shape} and {b.shape}")
    joint = copies_to_pairs(np.kron(a, b), n)
    return float(np.real(np.einsum("ij,ji->", global_swap(n), joint)))


# --------------------------------------------------------------------------
# measurements


class EffectSet:
    """A POVM: positive effects summing to the identity, with outcome labels."""

    def __init__(
        self,
        effects: Sequence,
        labels: Sequence[str],
        psd_tol: float = TOL.effect_psd,
        completeness_tol: float = TOL.effect_completeness,
    ):
        effects = tuple(np.array(e, dtype=complex) for e in effects)
        labels = tuple(str(x) for x in labels)
        if not effects or len(effects) != len(labels):
            raise ValidationError("need one label per effect and at least one effect")
        if len(set(labels)) != len(labels):
            raise ValidationError(f"duplicate outcome labels: {labels}")
        dim = effects[0].shape[0]
        for lab, e in zip(labels, effects):
            if e.shape != (dim, dim):
                raise ValidationError(f"effect {lab!r} has shape {e.shape}, expected {(dim, dim)}")
            if np.max(np.abs(e - dagger(e))) > psd_tol:
                raise ValidationError(f"effect {lab!r} is not Hermitian")
            lam_min = float(np.linalg.eigvalsh(0.5 * (e + dagger(e)))[0])
            if lam_min < -psd_tol:
                raise ValidationError(f"effect {lab!r} is not PSD: minimum eigenvalue {lam_min:.3e}")
        dev = float(np.max(np.abs(sum(effects) - np.eye(dim))))
        if dev > completeness_tol:
            raise ValidationError(f"effects do not sum to the identity: max deviation {dev:.3e} > {completeness_tol:.1e}")
        for e in effects:
            e.setflags(write=False)
        self.effects = effects
        self.labels = labels
        self.completeness_deviation = dev

    @property
    def dim(self) -> int:
        return self.effects[0].shape[0]

    def __len__(self) -> int:
        return len(self.effects)

    def __getitem__(self, label: str) -> np.ndarray:
        return self.effects[self.labels.index(label)]

    def __repr__(self) -> str:
        return f"EffectSet(labels={list(self.labels)})"


def ideal_bsm() -> EffectSet:
    return EffectSet([bell_state(x).projector() for x in BELL_LABELS], BELL_LABELS)


def with_visibility(es: EffectSet, visibility: float) -> EffectSet:
    """Scale off-diagonal elements (computational basis) of every effect by ``visibility``.

    Models reduced two-photon interference: v = 1 keeps the effects, v = 0 fully
    dephases them. Diagonals are untouched, so completeness is preserved.
    """
    if not 0.0 <= visibility <= 1.0:
        raise ValidationError(f"visibility {visibility} outside [0, 1]")
    out = []
    for e in es.effects:
        d = np.diag(np.diag(e))
        out.append(d + visibility * (e - d))
    return EffectSet(out, es.labels, psd_tol=_loose_psd(es), completeness_tol=max(es.completeness_deviation * 2, TOL.effect_completeness))


def _loose_psd(es: EffectSet) -> float:
    lam = min(float(np.linalg.eigvalsh(e)[0]) for e in es.effects)
    return max(TOL.effect_psd, -lam * 1.01)


def merge_phi_outcomes(es: EffectSet) -> EffectSet:
    """Partial Bell measurement: phi+ and phi- are not distinguished.

    The singlet outcome stays resolved, which is all the swap estimate needs.
    """
    keep = [lab for lab in es.labels if lab not in ("phi+", "phi-")]
    effects = [es["phi+"] + es["phi-"]] + [es[lab] for lab in keep]
    return EffectSet(effects, ["phi"] + keep, psd_tol=_loose_psd(es), completeness_tol=max(es.completeness_deviation * 2, TOL.effect_completeness))


def fixture_bsm(index: int, directory=None) -> EffectSet:
    """Reconstructed projectors of BSM1 or BSM2 as a loosely validated effect set."""
    projs = fixture_projectors(index, directory)
    # rounded published values: slightly non-PSD and complete only to ~1e-4
    return EffectSet(list(projs.values()), list(projs), psd_tol=1e-3, completeness_tol=TOL.fixture_completeness)


ProjectorSource = Union[str, EffectSet, tuple]
PROJECTOR_SOURCES = ("ideal", "fixture_1", "fixture_2", "fixture_pair")


@dataclass(frozen=True)
class NoiseModel:
    """Measurement imperfections.

    ``projector_source`` selects the Bell projectors: ``"ideal"``,
    ``"fixture_1"`` / ``"fixture_2"`` (one reconstructed set on both
    pairs), ``"fixture_pair"`` (BSM1 set on A1A2 and BSM2 set on B1B2), an
    :class:`EffectSet` used for both pairs, or a pair of effect sets.
    """

    visibility: float = 1.0
    projector_source: ProjectorSource = "ideal"
    partial_bsm: bool = False

    def __post_init__(self):
        if not 0.0 <= self.visibility <= 1.0:
            raise ValidationError(f"visibility {self.visibility} outside [0, 1]")
        src = self.projector_source
        if isinstance(src, str) and src not in PROJECTOR_SOURCES:
            raise ValidationError(f"unknown projector source {src!r}; expected one of {PROJECTOR_SOURCES}")

    def measurements(self) -> tuple[EffectSet, EffectSet]:
        src = self.projector_source
        if isinstance(src, EffectSet):
            pair = (src, src)
        elif isinstance(src, tuple):
            pair = src
        elif src == "ideal":
            pair = (ideal_bsm(), ideal_bsm())
        elif src == "fixture_pair":
            pair = (fixture_bsm(1), fixture_bsm(2))
        else:
            es = fixture_bsm(int(src[-1]))
            pair = (es, es)
        if self.visibility < 1.0:
            pair = tuple(with_visibility(es, self.visibility) for es in pair)
        if self.partial_bsm:
            pair = tuple(merge_phi_outcomes(es) for es in pair)
        return pair

    def describe(self) -> dict:
        src = self.projector_source
        return {
            "visibility": self.visibility,
            "projector_source": src if isinstance(src, str) else "custom",
            "partial_bsm": self.partial_bsm,
        }


@dataclass(frozen=True)
class ProbabilityTable:
    """Joint outcome distribution of the two Bell measurements."""

    labels: tuple[str, ...]
    probs: np.ndarray
    # total probability mass before renormalization (differs from 1 for imperfect effects)
    raw_total: float = 1.0

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.labels, self.probs.tolist()))


def pair_label(a: str, b: str) -> str:
    return f"{a}|{b}"


def split_label(label: str) -> tuple[str, str]:
    a, _, b = label.partition("|")
    return a, b


def bsm_joint_probs(joint, bsm1: EffectSet, bsm2: EffectSet) -> ProbabilityTable:
    """Outcome probabilities for BSM1 on (A1 A2) and BSM2 on (B1 B2).

    ``joint`` is a two-copy two-qubit state in copy-major layout (A1 B1 A2 B2).
    """
    r = joint.mat if isinstance(joint, DensityMatrix) else np.asarray(joint, dtype=complex)
    if r.shape != (16, 16):
        raise ValidationError(f"expected a 16x16 two-copy state, got {r.shape}")
    if bsm1.dim != 4 or bsm2.dim != 4:
        raise ValidationError("Bell measurements must act on two qubits")
    for es in (bsm1, bsm2):
        if es.completeness_deviation > TOL.fixture_completeness:
            raise ValidationError(f"effect set deviates from completeness by {es.completeness_deviation:.3e}")
    t = copies_to_pairs(r, 2).reshape(4, 4, 4, 4)
    e1 = np.stack(bsm1.effects)
    e2 = np.stack(bsm2.effects)
    # p_ab = Tr[(E_a (x) F_b) rho] = sum E_a[k,i] F_b[l,j] rho[(i,j),(k,l)]
    p = np.real(np.einsum("aki,blj,ijkl->ab", e1, e2, t)).ravel()
    # imperfect (fixture) effects are non-PSD at the 1e-5 level
    if np.min(p) < -1e-3:
        raise ValidationError(f"negative outcome probability {np.min(p):.3e}")
    p = np.clip(p, 0.0, None)
    total = float(p.sum())
    labels = tuple(pair_label(a, b) for a in bsm1.labels for b in bsm2.labels)
    return ProbabilityTable(labels, p / total, total)


# --------------------------------------------------------------------------
# counts


@dataclass(frozen=True)
class CountRecord:
    labels: tuple[str, ...]
    counts: tuple[int, ...]
    shots: int
    seed: int

    def __post_init__(self):
        if len(self.labels) != len(self.counts):
            raise ValidationError("labels and counts differ in length")
        if any(c < 0 for c in self.counts):
            raise ValidationError("counts must be non-negative")

    @property
    def total(self) -> int:
        return int(sum(self.counts))

    def to_json(self) -> dict:
        return {"labels": list(self.labels), "counts": [int(c) for c in self.counts], "shots": int(self.shots), "seed": int(self.seed)}

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, doc: Union[str, Mapping]) -> "CountRecord":
        if isinstance(doc, str):
            doc = json.loads(doc)
        try:
            return cls(tuple(doc["labels"]), tuple(int(c) for c in doc["counts"]), int(doc["shots"]), int(doc["seed"]))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed count record: {exc}") from exc


def sample_counts(table: ProbabilityTable, shots: int, seed: int, mode: str = "poisson") -> CountRecord:
    """Draw coincidence counts for ``shots`` expected events.

    ``"poisson"`` draws each outcome independently with mean ``shots * p``, so the
    total fluctuates as in coincidence counting; ``"multinomial"`` fixes the total.
    """
    if shots < 1:
        raise ValidationError(f"shots must be >= 1, got {shots}")
    p = np.asarray(table.probs, dtype=float)
    if np.any(p < 0) or not np.isfinite(p).all() or abs(p.sum() - 1.0) > 1e-8:
        raise ValidationError("invalid probability table")
    rng = np.random.default_rng(seed)
    if mode == "poisson":
        counts = rng.poisson(shots * p)
    elif mode == "multinomial":
        counts = rng.multinomial(shots, p / p.sum())
    else:
        raise ValidationError(f"unknown sampling mode {mode!r}")
    return CountRecord(table.labels, tuple(int(c) for c in counts), int(shots), int(seed))


def _singlet_masks(labels: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    pairs = [split_label(x) for x in labels]
    m1 = np.array([a == SINGLET for a, _ in pairs])
    m2 = np.array([b == SINGLET for _, b in pairs])
    if not m1.any() or not m2.any():
        raise ValidationError("outcome labels must resolve the singlet on both pairs")
    return m1, m2


def swap_from_frequencies(labels: Sequence[str], freqs) -> float:
    """1 - 2 f1 - 2 f2 + 4 f12 from singlet frequencies on pair 1, pair 2 and both."""
    m1, m2 = _singlet_masks(labels)
    f = np.asarray(freqs, dtype=float)
    f1 = f[..., m1].sum(axis=-1)
    f2 = f[..., m2].sum(axis=-1)
    f12 = f[..., m1 & m2].sum(axis=-1)
    return 1.0 - 2.0 * f1 - 2.0 * f2 + 4.0 * f12


def estimate_from_counts(record: CountRecord) -> tuple[float, float]:
    """Swap expectation and its binomial standard error.

    Each event contributes (1 - 2a)(1 - 2b) = +-1 with a, b the singlet indicators,
    so the estimate is a mean of +-1 variables and its error is sqrt((1 - m^2)/N).
    """
    total = record.total
    if total == 0:
        raise ValidationError("no counts recorded")
    freqs = np.asarray(record.counts, dtype=float) / total
    est = float(swap_from_frequencies(record.labels, freqs))
    stderr = math.sqrt(max(1.0 - est * est, 0.0) / total)
    return est, stderr


# --------------------------------------------------------------------------
# preparation


@dataclass(frozen=True)
class MixingSchedule:
    """Time-weighted QWP settings that realize rho_p (x) rho_p by classical mixing.

    A QWP at 90 degrees maps phi+ to phi-; setting pairs are (copy 1, copy 2).
    """

    p: float
    weights: tuple[float, float, float, float]
    settings: tuple[tuple[int, int], ...] = ((0, 0), (0, 90), (90, 0), (90, 90))

    @classmethod
    def for_p(cls, p: float) -> "MixingSchedule":
        if not 0.0 <= p <= 1.0:
            raise ValidationError(f"mixing parameter {p} outside [0, 1]")
        q = 1.0 - p
        return cls(p, (p * p, p * q, q * p, q * q))


def ideal_copy_states() -> dict[int, DensityMatrix]:
    return {0: bell_state("phi+").density(), 90: bell_state("phi-").density()}


def two_copy_state(
    schedule: MixingSchedule,
    copy1: Mapping[int, DensityMatrix] | None = None,
    copy2: Mapping[int, DensityMatrix] | None = None,
    u_second=None,
) -> DensityMatrix:
    """Convex combination of the four setting branches, copy-major layout.

    ``u_second`` (a 4x4 unitary) is applied to the second copy only.
    """
    copy1 = copy1 or ideal_copy_states()
    copy2 = copy2 or ideal_copy_states()
    u = np.eye(4) if u_second is None else np.asarray(u_second, dtype=complex)
    out = np.zeros((16, 16), dtype=complex)
    for w, (s1, s2) in zip(schedule.weights, schedule.settings):
        if w == 0:
            continue
        r2 = u @ copy2[s2].mat @ dagger(u)
        out += w * np.kron(copy1[s1].mat, r2)
    return DensityMatrix(out)


def local_evolution(axis, tau: float) -> np.ndarray:
    """exp(-i h tau) on each qubit of one copy, h the half-spin along ``axis``."""
    u1 = unitary_of(spin_half(axis), tau)
    return np.kron(u1, u1)


# --------------------------------------------------------------------------
# end-to-end protocol


@dataclass
class ProtocolPoint:
    p: float
    axis: str
    tau: float
    shots: int | None
    s_estimate: float
    error_bar: float
    s_raw: float
    clipped: bool
    purity_estimate: float
    overlap_estimate: float
    # infinite-shot values with ideal and with the configured Bell measurements
    s_ideal: float
    s_povm: float
    purity_counts: CountRecord | None = None
    overlap_counts: CountRecord | None = None
    mc_values: np.ndarray | None = field(default=None, repr=False)


def _estimate_batch(labels: Sequence[str], counts: np.ndarray) -> np.ndarray:
    totals = counts.sum(axis=-1, keepdims=True)
    if np.any(totals == 0):
        raise ValidationError("a Monte Carlo resample produced zero counts")
    return swap_from_frequencies(labels, counts / totals)


def monte_carlo_error_bar(
    purity_counts: CountRecord,
    overlap_counts: CountRecord,
    tau: float,
    mc_samples: int,
    seed: np.random.SeedSequence | int,
    workers: int = 1,
) -> tuple[float, np.ndarray]:
    """Standard deviation of the raw squared speed over Poisson resamples of both count records.

    Worker ``w`` draws from the ``w``-th child of ``seed``, so results depend only
    on (seed, workers).
    """
    if mc_samples < 1:
        raise ValidationError(f"mc_samples must be >= 1, got {mc_samples}")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    workers = max(1, min(int(workers), mc_samples))
    children = ss.spawn(workers)
    sizes = [mc_samples // workers + (1 if w < mc_samples % workers else 0) for w in range(workers)]
    lam_p = np.asarray(purity_counts.counts, dtype=float)
    lam_o = np.asarray(overlap_counts.counts, dtype=float)

    def chunk(w: int) -> np.ndarray:
        rng = np.random.default_rng(children[w])
        cp = rng.poisson(lam_p, size=(sizes[w], lam_p.size))
        co = rng.poisson(lam_o, size=(sizes[w], lam_o.size))
        pur = _estimate_batch(purity_counts.labels, cp)
        ovl = _estimate_batch(overlap_counts.labels, co)
        return (pur - ovl) / tau**2

    if workers == 1:
        values = chunk(0)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = np.concatenate(list(pool.map(chunk, range(workers))))
    err = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return err, values


def run_protocol_point(
    p: float,
    axis=SpinAxis.X,
    tau: float = DEFAULT_TAU,
    shots: int | None = 10**6,
    noise: NoiseModel | None = None,
    seed: int = 0,
    mc_samples: int = 1000,
    copy_states: tuple[Mapping[int, DensityMatrix], Mapping[int, DensityMatrix]] | None = None,
    workers: int = 1,
    sampling: str = "poisson",
) -> ProtocolPoint:
    """Simulate purity and overlap runs at mixing parameter ``p`` and estimate the squared speed.

    ``shots=None`` is the infinite-shot limit: frequencies equal probabilities
    and the error bar is zero.
    """
    axis = SpinAxis.parse(axis)
    noise = noise or NoiseModel()
    bsm1, bsm2 = noise.measurements()
    c1, c2 = copy_states or (None, None)
    schedule = MixingSchedule.for_p(p)
    u2 = local_evolution(axis, tau)
    purity_state = two_copy_state(schedule, c1, c2)
    overlap_state = two_copy_state(schedule, c1, c2, u2)

    ideal = ideal_bsm()
    ideal_tabs = [bsm_joint_probs(s, ideal, ideal) for s in (purity_state, overlap_state)]
    s_ideal = (swap_from_frequencies(ideal_tabs[0].labels, ideal_tabs[0].probs) - swap_from_frequencies(ideal_tabs[1].labels, ideal_tabs[1].probs)) / tau**2
    tab_p = bsm_joint_probs(purity_state, bsm1, bsm2)
    tab_o = bsm_joint_probs(overlap_state, bsm1, bsm2)
    pur_exact = float(swap_from_frequencies(tab_p.labels, tab_p.probs))
    ovl_exact = float(swap_from_frequencies(tab_o.labels, tab_o.probs))
    s_povm = (pur_exact - ovl_exact) / tau**2

    if shots is None:
        res = speed_from_measurements(pur_exact, ovl_exact, tau)
        return ProtocolPoint(p, axis.value, tau, None, res.squared_speed, 0.0, res.raw_squared_speed, res.clipped,
                             pur_exact, ovl_exact, float(s_ideal), float(s_povm))

    seeds = np.random.SeedSequence(seed).spawn(3)
    seed_p, seed_o = (int(s.generate_state(1, np.uint64)[0]) for s in seeds[:2])
    rec_p = sample_counts(tab_p, shots, seed_p, sampling)
    rec_o = sample_counts(tab_o, shots, seed_o, sampling)
    pur, _ = estimate_from_counts(rec_p)
    ovl, _ = estimate_from_counts(rec_o)
    res: SpeedResult = speed_from_measurements(pur, ovl, tau)
    err, values = monte_carlo_error_bar(rec_p, rec_o, tau, mc_samples, seeds[2], workers)
    return ProtocolPoint(p, axis.value, tau, int(shots), res.squared_speed, err, res.raw_squared_speed, res.clipped,
                         pur, ovl, float(s_ideal), float(s_povm), rec_p, rec_o, values)
