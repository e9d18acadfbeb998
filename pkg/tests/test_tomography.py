import numpy as np
import pytest

from qspeed.fixtures import PUBLISHED_BSM_FIDELITY
from qspeed.qcore import (
    BELL_LABELS,
    ValidationError,
    bell_mixture,
    bell_state,
    fidelity_pure,
    random_density_matrix,
    random_unitary,
    trace_distance,
)
from qspeed.swapnet import fixture_bsm, ideal_bsm
from qspeed.tomography import (
    ProbeSet,
    detector_probabilities,
    load_counts,
    mle_detector,
    mle_state,
    operator_fidelity,
    pauli_settings,
    sample_state_counts,
    save_counts,
    state_probabilities,
)

SETTINGS = pauli_settings(2)
PROBES = ProbeSet.products(2)


def test_probe_sets():
    assert len(ProbeSet.products(1).labels) == 6
    assert len(PROBES.labels) == 36 and PROBES.dim == 4
    assert PROBES.labels[0] == "HH" and "RL" in PROBES.labels
    with pytest.raises(ValidationError):
        ProbeSet.products(1, "HQ")


def test_pauli_settings_are_complete_measurements():
    assert len(SETTINGS) == 9
    for es in SETTINGS.values():
        assert len(es) == 4
        np.testing.assert_allclose(sum(es.effects), np.eye(4), atol=1e-14)


# ---------------------------------------------------------------- state MLE


def test_mle_recovers_pure_bell_state():
    phi = bell_state("phi+")
    res = mle_state(state_probabilities(phi.projector(), SETTINGS), SETTINGS)
    assert res.converged
    assert fidelity_pure(phi, res.estimate) >= 0.9999
    assert res.monotone


def test_mle_recovers_bell_mixture():
    rho = bell_mixture(0.3)
    res = mle_state(state_probabilities(rho.mat, SETTINGS), SETTINGS)
    assert trace_distance(res.estimate, rho.mat) <= 1e-3
    assert res.monotone
    assert np.linalg.eigvalsh(res.estimate)[0] >= -1e-9
    assert abs(np.trace(res.estimate) - 1) <= 1e-9


def test_mle_with_sampled_counts():
    phi = bell_state("phi+")
    counts = sample_state_counts(phi.projector(), SETTINGS, 10**5, seed=2)
    res = mle_state(counts, SETTINGS)
    assert fidelity_pure(phi, res.estimate) >= 0.995
    assert res.monotone


def test_mle_random_states_monotone(rng):
    for _ in range(5):
        rho = random_density_matrix(4, rng)
        res = mle_state(sample_state_counts(rho.mat, SETTINGS, 2000, seed=int(rng.integers(2**31))), SETTINGS)
        h = np.array(res.history)
        assert np.all(np.diff(h) >= -1e-12)


def test_generating_state_is_fixed_point(rng):
    rho = random_density_matrix(4, rng)
    res = mle_state(state_probabilities(rho.mat, SETTINGS), SETTINGS, max_iter=1, rho0=rho.mat)
    assert np.max(np.abs(res.estimate - rho.mat)) <= 1e-10


def test_incomplete_settings_are_rejected():
    only_z = {"ZZ": SETTINGS["ZZ"]}
    with pytest.raises(ValidationError, match="unobservable Pauli span: .*XX"):
        mle_state(state_probabilities(bell_state("phi+").projector(), only_z), only_z)


def test_bad_counts_are_rejected():
    with pytest.raises(ValidationError):
        mle_state({"ZZ": {"HH": -1}}, SETTINGS)
    with pytest.raises(ValidationError):
        mle_state({"QQ": {"HH": 1}}, SETTINGS)


# ---------------------------------------------------------------- detector MLE


def _check_effects(results, targets, tol):
    total = sum(r.estimate for r in results)
    assert np.max(np.abs(total - np.eye(4))) <= 1e-6
    for r, t in zip(results, targets):
        assert np.linalg.eigvalsh(r.estimate)[0] >= -1e-9
        assert trace_distance(r.estimate, t) <= tol
    assert results[0].monotone


def test_detector_recovers_ideal_bell_projectors():
    es = ideal_bsm()
    res = mle_detector(detector_probabilities(es.effects, PROBES, es.labels), es.labels, PROBES)
    _check_effects(res, es.effects, 1e-3)


@pytest.mark.parametrize("k", [1, 2])
def test_detector_recovers_fixture_projectors(k):
    es = fixture_bsm(k)
    res = mle_detector(detector_probabilities(es.effects, PROBES, es.labels), es.labels, PROBES)
    _check_effects(res, es.effects, 1e-2)


def test_detector_needs_complete_probes():
    hv = ProbeSet.products(2, "HV")
    es = ideal_bsm()
    with pytest.raises(ValidationError, match="not informationally complete"):
        mle_detector(detector_probabilities(es.effects, hv, es.labels), es.labels, hv)


def test_detector_missing_probe_counts():
    with pytest.raises(ValidationError):
        mle_detector({"HH": {"phi+": 1}}, BELL_LABELS, PROBES)


def test_detector_is_basis_covariant(rng):
    u1 = random_unitary(2, rng)
    U = np.kron(u1, u1)
    es = ideal_bsm()
    counts = detector_probabilities(es.effects, PROBES, es.labels)
    base = mle_detector(counts, es.labels, PROBES)
    rotated = mle_detector(counts, es.labels, PROBES.rotated(U))
    for b, r in zip(base, rotated):
        np.testing.assert_allclose(r.estimate, U @ b.estimate @ U.conj().T, atol=1e-6)


# ---------------------------------------------------------------- operator fidelity


def test_operator_fidelity_examples():
    phi = bell_state("phi+").projector()
    assert operator_fidelity(phi, phi) == pytest.approx(1.0, abs=1e-7)
    assert operator_fidelity(bell_state("psi-").projector(), bell_state("psi+").projector()) == pytest.approx(0, abs=1e-12)
    # scale invariance of the trace-normalized convention
    assert operator_fidelity(3 * phi, 0.5 * phi) == pytest.approx(1.0, abs=1e-7)
    with pytest.raises(ValidationError):
        operator_fidelity(np.zeros((4, 4)), phi)


def test_operator_fidelity_matches_pure_state_formula(rng):
    rho = random_density_matrix(4, rng)
    psi = bell_state("phi-")
    assert operator_fidelity(psi.projector(), rho.mat) == pytest.approx(fidelity_pure(psi, rho), abs=1e-7)


@pytest.mark.parametrize("k", [1, 2])
def test_fixture_bsm_mean_fidelity(k):
    ideal = ideal_bsm()
    es = fixture_bsm(k)
    mean = np.mean([operator_fidelity(es[lab], ideal[lab]) for lab in BELL_LABELS])
    assert mean == pytest.approx(PUBLISHED_BSM_FIDELITY[k], abs=0.02)


# ---------------------------------------------------------------- count files


def test_count_file_round_trip(tmp_path):
    counts = sample_state_counts(bell_state("phi+").projector(), SETTINGS, 1000, seed=1)
    path = tmp_path / "counts.json"
    save_counts(path, counts)
    loaded = load_counts(path)
    assert loaded == {s: {o: float(c) for o, c in v.items()} for s, v in counts.items()}
    res = mle_state(loaded, SETTINGS)
    assert res.converged


def test_count_file_rejects_bad_layout(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("[1, 2]")
    with pytest.raises(ValidationError):
        load_counts(path)
