"""Reconstructed Bell-pair states and Bell-measurement projectors from the optical experiment.

The matrices ship as matrix-JSON files inside the package. They are rounded to
four decimals, so the states have trace 1 +- 1e-4 and the projectors are
complete only to ~1e-4; use :meth:`DensityMatrix.repair` before treating a
fixture state as a validated state.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from qspeed.qcore import DensityMatrix, ValidationError, load_matrix

STATE_NAMES = ("phi_plus_1", "phi_minus_1", "phi_plus_2", "phi_minus_2")
BSM_OUTCOMES = {"phi+": "phi_plus", "phi-": "phi_minus", "psi+": "psi_plus", "psi-": "psi_minus"}
PROJECTOR_NAMES = tuple(f"bsm{k}_{v}" for k in (1, 2) for v in BSM_OUTCOMES.values())

# published fidelities with the ideal Bell states
PUBLISHED_STATE_FIDELITY = {
    "phi_plus_1": 0.9889,
    "phi_minus_1": 0.9901,
    "phi_plus_2": 0.9279,
    "phi_minus_2": 0.9319,
}
PUBLISHED_BSM_FIDELITY = {1: 0.9389, 2: 0.9360}


def fixture_dir() -> Path:
    return Path(str(resources.files("qspeed") / "fixtures"))


def load_fixture(name: str, directory=None) -> np.ndarray:
    """Raw fixture matrix by name, e.g. ``"phi_plus_1"`` or ``"bsm2_psi_minus"``."""
    if name not in STATE_NAMES + PROJECTOR_NAMES:
        raise ValidationError(f"unknown fixture {name!r}")
    path = Path(directory or fixture_dir()) / f"{name}.json"
    if not path.exists():
        raise FileNotFoundError(f"fixture file missing: {path}")
    return load_matrix(path)


def fixture_state(name: str, directory=None) -> DensityMatrix:
    """Fixture state after the explicit repair step (trace renormalized, negatives clipped)."""
    if name not in STATE_NAMES:
        raise ValidationError(f"{name!r} is not a fixture state; expected one of {STATE_NAMES}")
    return DensityMatrix.repair(load_fixture(name, directory))


def fixture_copy_states(copy: int, directory=None) -> dict[int, DensityMatrix]:
    """Branch states of one experimental copy keyed by QWP angle (0 -> phi+, 90 -> phi-)."""
    if copy not in (1, 2):
        raise ValidationError(f"copy must be 1 or 2, got {copy}")
    return {
        0: fixture_state(f"phi_plus_{copy}", directory),
        90: fixture_state(f"phi_minus_{copy}", directory),
    }


def fixture_projectors(bsm: int, directory=None) -> dict[str, np.ndarray]:
    if bsm not in (1, 2):
        raise ValidationError(f"BSM index must be 1 or 2, got {bsm}")
    return {label: load_fixture(f"bsm{bsm}_{stem}", directory) for label, stem in BSM_OUTCOMES.items()}
