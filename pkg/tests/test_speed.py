import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qspeed.dynamics import spin_half, spin_hamiltonian
from qspeed.fisher import sldf, variance
from qspeed.qcore import (
    DensityMatrix,
    ValidationError,
    bell_mixture,
    bell_state,
    random_density_matrix,
    random_hermitian,
    random_pure_state,
)
from qspeed.speed import (
    DEFAULT_TAU,
    depolarized_sandwich,
    entanglement_witness,
    speed_from_measurements,
    squared_speed_tau,
    squared_speed_zero,
)

SINC2 = math.sin(math.pi / 6) ** 2 / (math.pi / 6) ** 2


def test_sinc_constant():
    assert SINC2 == pytest.approx(0.91189, abs=1e-5)


def test_invariant_state_has_zero_speed():
    rho = DensityMatrix(np.diag([0.4, 0.3, 0.2, 0.1]))
    for tau in (0.01, 1.0, 3.0):
        res = squared_speed_tau(rho, spin_hamiltonian("z"), tau)
        assert res.squared_speed == pytest.approx(0, abs=1e-14)
        assert not res.clipped


@pytest.mark.parametrize("p", np.linspace(0, 1, 11))
def test_bell_mixture_closed_forms(p):
    # purity - overlap computed in closed form from the two-dimensional orbit
    expected = {"x": p**2 * SINC2, "y": (1 - p) ** 2 * SINC2, "z": (1 - 2 * p) ** 2 * SINC2}
    for axis, value in expected.items():
        res = squared_speed_tau(bell_mixture(p), spin_hamiltonian(axis), DEFAULT_TAU)
        assert res.squared_speed == pytest.approx(value, abs=1e-12)
        assert res.squared_speed == pytest.approx((res.purity - res.overlap) / res.tau**2, abs=1e-12)
        assert res.s_tau == pytest.approx(math.sqrt(2 * res.squared_speed), abs=1e-12)


def test_pure_bell_state_value():
    res = squared_speed_tau(bell_mixture(1.0), spin_hamiltonian("x"))
    assert res.squared_speed == pytest.approx(0.91189, abs=1e-5)


def test_tau_must_be_positive():
    with pytest.raises(ValidationError):
        squared_speed_tau(bell_mixture(0.5), spin_hamiltonian("x"), 0.0)
    with pytest.raises(ValidationError):
        speed_from_measurements(1.0, 0.5, -1.0)


def test_squared_speed_zero_examples():
    assert squared_speed_zero(DensityMatrix(np.diag([0.7, 0.3])), spin_half("z")) == 0
    rho = bell_mixture(0.3)
    H = spin_hamiltonian("x")
    c = rho.mat @ H - H @ rho.mat
    assert squared_speed_zero(rho, H) == pytest.approx(-0.5 * np.trace(c @ c).real, abs=1e-14)
    assert squared_speed_zero(rho, H) == pytest.approx(0.09, abs=1e-12)
    assert squared_speed_zero(rho, H) < sldf(rho, H)
    pure = bell_state("phi+").density()
    assert squared_speed_zero(pure, H) == pytest.approx(variance(pure, H), abs=1e-12)
    assert squared_speed_zero(pure, H) == pytest.approx(sldf(pure, H), abs=1e-12)


def test_squared_speed_zero_spectral_form(rng):
    rho = random_density_matrix(4, rng)
    H = random_hermitian(4, rng)
    lam, v = rho.spectrum
    h2 = np.abs(v.conj().T @ H @ v) ** 2
    spectral = 0.5 * np.sum((lam[:, None] - lam[None, :]) ** 2 * h2)
    assert squared_speed_zero(rho, H) == pytest.approx(spectral, abs=1e-10)


def test_witness_examples():
    assert entanglement_witness(0.6, 2).entangled_useful
    v = entanglement_witness(0.5, 2)
    assert not v.entangled_useful and v.threshold == 0.5
    with pytest.raises(ValidationError):
        entanglement_witness(0.6, 1)
    with pytest.raises(ValidationError):
        entanglement_witness(-0.1, 2)


def test_witness_region_for_x_axis():
    H = spin_hamiltonian("x")
    for p in np.linspace(0, 1, 101):
        s = squared_speed_tau(bell_mixture(p), H).squared_speed
        assert entanglement_witness(s, 2).entangled_useful == (p > 0.7405)


def test_speed_from_measurements_examples():
    assert speed_from_measurements(0.58, 0.58, DEFAULT_TAU).squared_speed == 0
    assert speed_from_measurements(1.0, math.cos(math.pi / 6) ** 2).squared_speed == pytest.approx(SINC2, abs=1e-12)
    for overlap in (0.0, 0.2, 0.5):
        purity = 0.9119 * DEFAULT_TAU**2 + overlap
        assert speed_from_measurements(purity, overlap).squared_speed == pytest.approx(0.9119, abs=1e-12)


def test_negative_speed_is_clipped_and_flagged():
    res = speed_from_measurements(0.50, 0.51)
    assert res.squared_speed == 0.0 and res.clipped
    assert res.raw_squared_speed < 0
    with pytest.raises(ValidationError):
        speed_from_measurements(2.0, 0.5)


def test_depolarized_sandwich_examples():
    plus = np.full((2, 2), 0.5)
    rho = DensityMatrix(0.8 * plus + 0.2 * np.eye(2) / 2)
    lo, hi = depolarized_sandwich(rho, spin_half("z"))
    assert lo - 1e-9 <= sldf(rho, spin_half("z")) <= hi + 1e-9

    phi = bell_state("phi+").projector()
    H = spin_hamiltonian("x")
    rho4 = DensityMatrix(0.9 * phi + 0.1 * np.eye(4) / 4)
    lo, hi = depolarized_sandwich(rho4, H)
    assert lo - 1e-9 <= sldf(rho4, H) <= hi + 1e-9

    pure = DensityMatrix(phi)
    lo, hi = depolarized_sandwich(pure, H)
    assert lo == pytest.approx(hi) and lo == pytest.approx(sldf(pure, H), abs=1e-12)

    with pytest.raises(ValidationError):
        depolarized_sandwich(DensityMatrix.maximally_mixed(4), H)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 4, 8]), st.floats(0.0, 0.95))
def test_depolarized_sandwich_random(seed, dim, eps):
    g = np.random.default_rng(seed)
    psi = random_pure_state(dim, g).projector()
    rho = DensityMatrix((1 - eps) * psi + eps * np.eye(dim) / dim)
    H = random_hermitian(dim, g)
    lo, hi = depolarized_sandwich(rho, H)
    assert lo - 1e-9 <= sldf(rho, H) <= hi + 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 4, 8]))
def test_bound_chain(seed, dim):
    g = np.random.default_rng(seed)
    rho = random_density_matrix(dim, g, rank=int(g.integers(1, dim + 1)))
    H = random_hermitian(dim, g)
    i_f = sldf(rho, H)
    for tau in (0.01, 0.1, DEFAULT_TAU, 1.0):
        assert squared_speed_tau(rho, H, tau).squared_speed <= i_f + 1e-9
    assert squared_speed_zero(rho, H) <= i_f + 1e-9
    assert i_f <= variance(rho, H) + 1e-9


def test_witness_soundness_on_product_states(rng):
    for _ in range(100):
        a = random_density_matrix(2, rng, rank=int(rng.integers(1, 3)))
        b = random_density_matrix(2, rng, rank=int(rng.integers(1, 3)))
        rho = DensityMatrix(np.kron(a.mat, b.mat))
        for axis in "xyz":
            h = spin_half(axis)
            s = squared_speed_tau(rho, spin_hamiltonian(axis), DEFAULT_TAU).squared_speed
            assert s <= sldf(a, h) + sldf(b, h) + 1e-9 <= 0.5 + 1e-9
            assert not entanglement_witness(s, 2).entangled_useful


def test_taylor_consistency(rng):
    taus = np.array([1e-3, 3e-3, 1e-2, 3e-2, 1e-1])
    for _ in range(10):
        rho = random_density_matrix(4, rng)
        H = random_hermitian(4, rng)
        s0 = squared_speed_zero(rho, H)
        diffs = np.array([abs(squared_speed_tau(rho, H, t).squared_speed - s0) for t in taus])
        C = np.max(diffs[2:] / taus[2:] ** 2)
        assert np.all(diffs <= 1.5 * C * taus**2 + 1e-9)


def test_positive_speed_iff_asymmetry(rng):
    for k in range(60):
        H = random_hermitian(4, rng)
        if k % 3 == 0:
            # states diagonal in the eigenbasis of H carry no asymmetry
            _, v = np.linalg.eigh(H)
            rho = DensityMatrix((v * rng.dirichlet(np.ones(4))) @ v.conj().T)
        else:
            rho = random_density_matrix(4, rng)
        i_f = sldf(rho, H)
        s = squared_speed_tau(rho, H, 1e-2).squared_speed
        if 1e-12 < i_f < 1e-6:
            continue
        assert (s > 1e-12) == (i_f > 1e-10)
