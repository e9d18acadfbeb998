"""Numerical tolerances shared by every module."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    validation: float = 1e-10
    reconstruction: float = 1e-9
    # eigenvalue gaps below this are treated as degenerate in spectral sums
    degeneracy: float = 1e-12
    pure_norm: float = 1e-12
    effect_psd: float = 1e-9
    effect_completeness: float = 1e-8
    # experimentally reconstructed projectors only satisfy completeness loosely
    fixture_completeness: float = 2e-2


TOL = Tolerances()
