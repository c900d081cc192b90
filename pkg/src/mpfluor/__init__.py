"""Exact-numerics simulator for multi-photon fluorescence of driven two-level systems."""

from .fock import BasisLayout, CoherentSpec, StateVector, build_basis, coherent_state, initial_state
from .hamiltonian import OperatorMatrix, build_hamiltonian, evaluate
from .models import Family, ModelSpec, SpecError
from .propagator import KrylovConfig, PropagationError, Trajectory, krylov_step, propagate

__version__ = "0.1.0"

__all__ = [
    "BasisLayout",
    "CoherentSpec",
    "Family",
    "KrylovConfig",
    "ModelSpec",
    "OperatorMatrix",
    "PropagationError",
    "SpecError",
    "StateVector",
    "Trajectory",
    "build_basis",
    "build_hamiltonian",
    "coherent_state",
    "evaluate",
    "initial_state",
    "krylov_step",
    "propagate",
]
