"""Spin Hamiltonians and exact unitary evolution."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from qspeed.config import TOL
from qspeed.qcore import (
    DensityMatrix,
    ValidationError,
    dagger,
    eig_hermitian,
    require_hermitian,
    require_unitary,
    tensor,
)

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class SpinAxis(str, Enum):
    X = "x"
    Y = "y"
    Z = "z"

    @classmethod
    def parse(cls, value) -> "SpinAxis":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValidationError(f"unknown spin axis {value!r}; expected x, y or z") from None


def spin_half(axis) -> np.ndarray:
    """Half the Pauli matrix along ``axis`` (eigenvalues +1/2 and -1/2)."""
    return 0.5 * PAULI[SpinAxis.parse(axis).value]


@dataclass(frozen=True)
class AdditiveHamiltonian:
    n: int
    local: np.ndarray
    total: np.ndarray

    @property
    def dim(self) -> int:
        return self.total.shape[0]


def additive_hamiltonian(h, n: int) -> AdditiveHamiltonian:
    """H = sum_i I x ... x h_i x ... x I over ``n`` qubits."""
    h = require_hermitian(h, what="single-site generator")
    if h.shape != (2, 2):
        raise ValidationError(f"single-site generator must be 2x2, got {h.shape}")
    if not 1 <= n <= 10:
        raise ValidationError(f"number of sites must be in [1, 10], got {n}")
    eye = np.eye(2, dtype=complex)
    total = np.zeros((2**n, 2**n), dtype=complex)
    for i in range(n):
        total += tensor(*[h if j == i else eye for j in range(n)])
    return AdditiveHamiltonian(n, h, total)


def spin_hamiltonian(axis, n: int = 2) -> np.ndarray:
    """Additive half-spin Hamiltonian along ``axis`` as a plain matrix."""
    return additive_hamiltonian(spin_half(axis), n).total


def unitary_of(H, t: float) -> np.ndarray:
    """exp(-i H t) via the spectral decomposition of ``H``."""
    lam, v = eig_hermitian(H)
    return (v * np.exp(-1j * lam * t)) @ dagger(v)


def evolve(rho, U) -> DensityMatrix:
    """U rho U^dagger."""
    r = rho.mat if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    u = require_unitary(U, TOL.validation, "evolution operator")
    if u.shape != r.shape:
        raise ValidationError(f"dimension mismatch: state {r.shape} vs unitary {u.shape}")
    return DensityMatrix(u @ r @ dagger(u))
