"""Speed of a state under unitary evolution and the bounds it certifies.

The squared speed over a time shift ``tau`` is::

    S_tau(rho, H) = (Tr rho^2 - Tr(rho U rho U^dagger)) / tau^2,   U = exp(-i H tau)

It lower-bounds the SLD Fisher information for every ``tau``. For an additive
half-spin Hamiltonian on ``n`` qubits, ``S_tau > n/4`` witnesses entanglement
that is useful for phase estimation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from qspeed.dynamics import evolve, unitary_of
from qspeed.qcore import DensityMatrix, ValidationError, hs_overlap, require_hermitian

DEFAULT_TAU = math.pi / 6


@dataclass(frozen=True)
class SpeedResult:
    s_tau: float
    squared_speed: float
    tau: float
    purity: float
    overlap: float
    # set when a negative sampled estimate was clipped to zero
    clipped: bool = False
    raw_squared_speed: float | None = None


def _result(purity: float, overlap: float, tau: float) -> SpeedResult:
    raw = (purity - overlap) / tau**2
    clipped = raw < 0
    sq = 0.0 if clipped else raw
    return SpeedResult(
        s_tau=math.sqrt(2.0 * sq),
        squared_speed=sq,
        tau=tau,
        purity=purity,
        overlap=overlap,
        clipped=clipped,
        raw_squared_speed=raw,
    )


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not tau > 0:
        raise ValidationError(f"time shift must be positive, got {tau}")
    return tau


def squared_speed_tau(rho: DensityMatrix, H, tau: float = DEFAULT_TAU) -> SpeedResult:
    tau = _check_tau(tau)
    h = require_hermitian(H, what="Hamiltonian")
    if h.shape != rho.mat.shape:
        raise ValidationError(f"dimension mismatch: state {rho.mat.shape} vs Hamiltonian {h.shape}")
    rho_tau = evolve(rho, unitary_of(h, tau))
    purity = hs_overlap(rho, rho)
    overlap = hs_overlap(rho, rho_tau)
    # purity - overlap = |rho - rho_tau|_F^2 / 2 because evolution preserves purity;
    # the norm form avoids cancellation at small tau and is never negative
    diff = rho.mat - rho_tau.mat
    sq = 0.5 * float(np.real(np.vdot(diff, diff))) / tau**2
    return SpeedResult(math.sqrt(2.0 * sq), sq, tau, purity, overlap, False, sq)


def squared_speed_zero(rho: DensityMatrix, H) -> float:
    """Zero-shift limit S_0 = -Tr([rho, H]^2) / 2."""
    h = require_hermitian(H, what="Hamiltonian")
    r = rho.mat
    if h.shape != r.shape:
        raise ValidationError(f"dimension mismatch: state {r.shape} vs Hamiltonian {h.shape}")
    c = r @ h - h @ r
    return max(-0.5 * float(np.real(np.trace(c @ c))), 0.0)


def speed_from_measurements(purity: float, overlap: float, tau: float = DEFAULT_TAU) -> SpeedResult:
    """Squared speed from (possibly noisy) purity and overlap estimates.

    Negative values are clipped to zero and flagged on the result.
    """
    tau = _check_tau(tau)
    for name, v in (("purity", purity), ("overlap", overlap)):
        if not -0.5 <= v <= 1.5:
            raise ValidationError(f"{name} estimate {v} outside the plausible range [-0.5, 1.5]")
    return _result(float(purity), float(overlap), tau)


@dataclass(frozen=True)
class WitnessVerdict:
    s_value: float
    threshold: float
    entangled_useful: bool


def entanglement_witness(s_value: float, n: int) -> WitnessVerdict:
    """S > n/4 certifies metrologically useful entanglement of ``n`` qubits."""
    if n < 2:
        raise ValidationError(f"the witness needs at least two sites, got n={n}")
    if s_value < 0:
        raise ValidationError(f"squared speed must be non-negative, got {s_value}")
    threshold = n / 4
    return WitnessVerdict(float(s_value), threshold, bool(s_value > threshold))


def depolarized_sandwich(rho_eps: DensityMatrix, H) -> tuple[float, float]:
    """Bounds S_0 <= I_F <= sqrt((d-1)/(d Tr rho^2 - 1)) S_0 for pure states mixed with white noise.

    The caller asserts ``rho_eps`` has that form; only the purity is checked.
    """
    d = rho_eps.dim
    purity = rho_eps.purity
    if purity <= 1.0 / d + 1e-12:
        raise ValidationError(f"purity {purity:.6g} too close to 1/d = {1 / d:.6g}; the upper bound diverges")
    s0 = squared_speed_zero(rho_eps, H)
    return s0, math.sqrt((d - 1) / (d * purity - 1)) * s0
