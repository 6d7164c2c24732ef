"""Quantum feedforward networks for steady states and dynamics of Lindblad models."""
from .ed_oracle import evolve_rk4, liouvillian_matrix, measure, standard_observables, steady_state
from .estimator import DynamicsSolver, SteadyStateSolver
from .lindblad import LindbladModel, apply_liouvillian, build_decay, build_ising1d, build_j1j2_2d
from .network import Connectivity, NetworkTopology, Tying, all_derivatives, feedforward
from .qcore import PauliString, partial_trace, pauli_matrix
from .sr_solver import SolverConfig, SrSystem, TrajectoryRecord, assemble_exact, run

__all__ = [
    "Connectivity",
    "DynamicsSolver",
    "LindbladModel",
    "NetworkTopology",
    "PauliString",
    "SolverConfig",
    "SrSystem",
    "SteadyStateSolver",
    "TrajectoryRecord",
    "Tying",
    "all_derivatives",
    "apply_liouvillian",
    "assemble_exact",
    "build_decay",
    "build_ising1d",
    "build_j1j2_2d",
    "evolve_rk4",
    "feedforward",
    "liouvillian_matrix",
    "measure",
    "partial_trace",
    "pauli_matrix",
    "run",
    "standard_observables",
    "steady_state",
]
__version__ = "0.1.0"
