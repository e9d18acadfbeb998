"""SU(2) gates as quarter-, half-, quarter-wave plate sequences.

Euler form: ``u(xi, eta, zeta) = exp(-i xi Y/2) exp(-i eta X/2) exp(-i zeta Y/2)``,
realized as ``Q(theta3) H(theta2) Q(theta1)`` with::

    theta1 = pi/4 - zeta/2
    theta2 = -pi/4 + (xi + eta - zeta)/4
    theta3 = pi/4 + xi/2          (all mod pi)

Which Jones matrices make that identity hold depends on the retardance sign and
on the reference axis of the plate angle, so conventions are named and
swappable. ``"diagonal"`` (angles measured from the diagonal axis, retarder
``diag(1, -i)``) satisfies the identity exactly and is the default.
``"horizontal"`` is the textbook form ``hwp(t) = [[cos 2t, sin 2t], [sin 2t, -cos 2t]]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from qspeed.dynamics import PAULI, unitary_of
from qspeed.qcore import ValidationError, require_unitary


@dataclass(frozen=True)
class JonesConvention:
    name: str
    # sign of the quarter-wave retardance: diag(1, +i) or diag(1, -i) in the plate frame
    qwp_sign: int
    # plate angle zero sits at this physical angle
    axis_offset: float


CONVENTIONS = {
    c.name: c
    for c in (
        JonesConvention("diagonal", -1, math.pi / 4),
        JonesConvention("horizontal", +1, 0.0),
        JonesConvention("horizontal_conj", -1, 0.0),
    )
}
DEFAULT_CONVENTION = "diagonal"


def get_convention(convention) -> JonesConvention:
    if isinstance(convention, JonesConvention):
        return convention
    try:
        return CONVENTIONS[convention]
    except KeyError:
        raise ValidationError(f"unknown Jones convention {convention!r}; expected one of {sorted(CONVENTIONS)}") from None


def _rot(t: float) -> np.ndarray:
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _plate(theta: float, retarder: np.ndarray, conv: JonesConvention) -> np.ndarray:
    a = theta - conv.axis_offset
    return _rot(a) @ retarder @ _rot(-a)


def qwp(theta: float, convention=DEFAULT_CONVENTION) -> np.ndarray:
    conv = get_convention(convention)
    return _plate(theta, np.diag([1.0, conv.qwp_sign * 1j]), conv)


def hwp(theta: float, convention=DEFAULT_CONVENTION) -> np.ndarray:
    conv = get_convention(convention)
    return _plate(theta, np.diag([1.0, -1.0]).astype(complex), conv)


@dataclass(frozen=True)
class EulerAngles:
    xi: float
    eta: float
    zeta: float


@dataclass(frozen=True)
class WaveplateSequence:
    theta1: float
    theta2: float
    theta3: float

    def degrees(self) -> tuple[float, float, float]:
        return tuple(math.degrees(t) for t in (self.theta1, self.theta2, self.theta3))


def euler_unitary(e: EulerAngles) -> np.ndarray:
    ry = lambda a: unitary_of(PAULI["y"] / 2, a)  # noqa: E731
    return ry(e.xi) @ unitary_of(PAULI["x"] / 2, e.eta) @ ry(e.zeta)


def decompose(e: EulerAngles) -> WaveplateSequence:
    """Plate angles in [0, pi) realizing ``euler_unitary(e)``."""
    t1 = (math.pi / 4 - e.zeta / 2) % math.pi
    t2 = (-math.pi / 4 + (e.xi + e.eta - e.zeta) / 4) % math.pi
    t3 = (math.pi / 4 + e.xi / 2) % math.pi
    return WaveplateSequence(t1, t2, t3)


def compose(seq: WaveplateSequence, convention=DEFAULT_CONVENTION) -> np.ndarray:
    """Q(theta3) H(theta2) Q(theta1): the light meets the theta1 plate first."""
    return qwp(seq.theta3, convention) @ hwp(seq.theta2, convention) @ qwp(seq.theta1, convention)


def equal_up_to_phase(u, v, tol: float = 1e-10) -> bool:
    """True iff ``u`` equals ``e^{i phi} v`` entrywise within ``tol``.

    The phase is read off the first entry of ``v`` whose magnitude is at least
    half the smallest possible maximum entry of a unitary, 1/(2 sqrt(d)).
    """
    a = require_unitary(u, 1e-8, "first argument")
    b = require_unitary(v, 1e-8, "second argument")
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    floor = 0.5 / math.sqrt(a.shape[0])
    idx = np.flatnonzero(np.abs(b.ravel()) >= floor)[0]
    ratio = a.ravel()[idx] / b.ravel()[idx]
    if abs(ratio) == 0:
        return False
    phase = ratio / abs(ratio)
    return bool(np.max(np.abs(a - phase * b)) <= tol)


# --------------------------------------------------------------------------
# reference plate settings for tau = pi/6

_P = math.pi
REFERENCE_GATE_ANGLES = {
    "I": WaveplateSequence(_P / 4, _P / 4, _P / 4),
    "U_X": WaveplateSequence(_P / 2, -_P / 24, _P / 2),
    "U_Y": WaveplateSequence(_P / 4, 5 * _P / 24, _P / 6),
    "U_Z": WaveplateSequence(_P / 4, 5 * _P / 24, _P / 4),
}


def gate_targets(tau: float = math.pi / 6) -> dict[str, np.ndarray]:
    return {
        "I": np.eye(2, dtype=complex),
        "U_X": unitary_of(PAULI["x"] / 2, tau),
        "U_Y": unitary_of(PAULI["y"] / 2, tau),
        "U_Z": unitary_of(PAULI["z"] / 2, tau),
    }


@dataclass(frozen=True)
class GateAngleRow:
    convention: str
    gate: str
    matches: bool
    # diagnostics for near misses: the inverse gate, or the plates in reverse order
    matches_inverse: bool
    matches_reversed: bool
    realized_as: str


def gate_angle_report(tau: float = math.pi / 6, tol: float = 1e-9) -> list[GateAngleRow]:
    """Check each reference plate setting against exp(-i h tau) under every convention."""
    targets = gate_targets(tau)
    named = dict(targets)
    named.update({f"{k}^dagger": t.conj().T for k, t in targets.items() if k != "I"})
    rows = []
    for cname in CONVENTIONS:
        for gate, seq in REFERENCE_GATE_ANGLES.items():
            fwd = compose(seq, cname)
            rev = qwp(seq.theta1, cname) @ hwp(seq.theta2, cname) @ qwp(seq.theta3, cname)
            tgt = targets[gate]
            realized = [k for k, t in named.items() if equal_up_to_phase(fwd, t, tol)]
            rows.append(
                GateAngleRow(
                    cname,
                    gate,
                    equal_up_to_phase(fwd, tgt, tol),
                    equal_up_to_phase(fwd, tgt.conj().T, tol),
                    equal_up_to_phase(rev, tgt, tol),
                    realized[0] if realized else "other",
                )
            )
    return rows
