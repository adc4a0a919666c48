"""Diffusion adaptive estimation over networks with noisy links.

Simulation laboratory for adapt-then-combine diffusion filters (LMS,
correntropy, and total-correntropy variants) exchanging data and weight
estimates over noisy channels, plus the closed-form mean and
mean-square analysis they admit under Gaussian noise.
"""

from .engine import AlgorithmSpec, KernelSchedule, NodeState, SharedSample
from .errors import (
    ConfigError,
    DifflabError,
    EmptyEnsembleError,
    GenerationFailureError,
    InstabilityError,
    InvalidArgumentError,
    NumericalFailureError,
    UnknownKeyError,
)
from .harness import (
    ExperimentConfig,
    LearningCurve,
    convergence_iteration,
    monte_carlo_msd,
    run_single_realization,
    steady_state_estimate,
    sweep,
    theory_vs_simulation,
)
from .noise import GmmSpec, LinkNoiseSpec, gamma_lk, perturb_link, sample_gmm
from .simulate import NetworkProblem, simulate_runs
from .theory import (
    MsdPrediction,
    TheoryInputs,
    gradient_covariance,
    hessian_at_optimum,
    mean_recursion_matrix,
    steady_state_msd,
    stepsize_upper_bound,
)
from .topology import (
    CombinationMatrix,
    NetworkGraph,
    generate_random_graph,
    load_edge_list,
    metropolis_weights,
    save_edge_list,
    validate_combination_matrix,
)

__all__ = [
    "AlgorithmSpec",
    "CombinationMatrix",
    "ConfigError",
    "DifflabError",
    "EmptyEnsembleError",
    "ExperimentConfig",
    "GenerationFailureError",
    "GmmSpec",
    "InstabilityError",
    "InvalidArgumentError",
    "KernelSchedule",
    "LearningCurve",
    "LinkNoiseSpec",
    "MsdPrediction",
    "NetworkGraph",
    "NetworkProblem",
    "NodeState",
    "NumericalFailureError",
    "SharedSample",
    "TheoryInputs",
    "UnknownKeyError",
    "convergence_iteration",
    "gamma_lk",
    "generate_random_graph",
    "gradient_covariance",
    "hessian_at_optimum",
    "load_edge_list",
    "mean_recursion_matrix",
    "metropolis_weights",
    "monte_carlo_msd",
    "perturb_link",
    "run_single_realization",
    "sample_gmm",
    "save_edge_list",
    "simulate_runs",
    "steady_state_estimate",
    "steady_state_msd",
    "stepsize_upper_bound",
    "sweep",
    "theory_vs_simulation",
    "validate_combination_matrix",
]
