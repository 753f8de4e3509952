"""Thermal operations on small system+bath pairs and their non-Markovianity.

Library layout:

- :mod:`athermal_markov.linalg` -- dense complex primitives and entropies
- :mod:`athermal_markov.thermal` -- Hamiltonians, Gibbs states, energy-block
  unitaries, the thermal channel, Markovianity checks, perturbation theory
- :mod:`athermal_markov.measures` -- entanglement / correlation / distance
  measures and their first-order perturbation responses
- :mod:`athermal_markov.optimize` -- deterministic multi-start Nelder-Mead
- :mod:`athermal_markov.experiments` -- preconfigured sweeps and property suite
- :mod:`athermal_markov.cli` -- command-line front end
"""

from .linalg import DensityMatrix, eigh, kron, partial_trace, partial_transpose, \
    trace_norm, von_neumann_entropy
from .measures import DeltaReport, MarkovianFamily, MeasureValue, choi_state, \
    chi_lambda_bound, delta, discord, distance_measure, log_negativity, \
    mutual_information, theta_lambda, x_lambda
from .optimize import OptimizationResult, OptimizerConfig, constrained_phase_manifold, minimize
from .thermal import EnergyBlockUnitary, GibbsState, Hamiltonian, MtoConstraintReport, \
    PerturbationSpec, ThermalOperation, apply, build_block_unitary, commutator_norm, \
    gibbs_state, mto_check, perturbed_hamiltonian, perturbed_state_exact, \
    perturbed_state_first_order, thermal_operation, total_hamiltonian

__version__ = "0.1.0"

__all__ = [
    "DensityMatrix", "eigh", "kron", "partial_trace", "partial_transpose",
    "trace_norm", "von_neumann_entropy",
    "DeltaReport", "MarkovianFamily", "MeasureValue", "choi_state",
    "chi_lambda_bound", "delta", "discord", "distance_measure",
    "log_negativity", "mutual_information", "theta_lambda", "x_lambda",
    "OptimizationResult", "OptimizerConfig", "constrained_phase_manifold", "minimize",
    "EnergyBlockUnitary", "GibbsState", "Hamiltonian", "MtoConstraintReport",
    "PerturbationSpec", "ThermalOperation", "apply", "build_block_unitary",
    "commutator_norm", "gibbs_state", "mto_check", "perturbed_hamiltonian",
    "perturbed_state_exact", "perturbed_state_first_order", "thermal_operation",
    "total_hamiltonian",
    "__version__",
]
