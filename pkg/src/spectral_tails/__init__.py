"""Upper and lower tails of the top eigenvalue of sparse Erdos-Renyi graphs with Gaussian weights."""

from .errors import BudgetExceededError, ConvergenceError, InvariantError
from .graph import (
    MotzkinStrausResult,
    SpectralSummary,
    WeightedGraph,
    clique_number,
    connected_components,
    largest_eigenvalue,
    motzkin_straus_optimize,
    spectral_summary,
)
from .rate import RateProfile, TransitionLadder, phi, psi, transition_points
from .sampler import ModelParams, decompose, plan_decomposition, plant_clique, sample_network

__version__ = "0.1.0"

__all__ = [
    "BudgetExceededError",
    "ConvergenceError",
    "InvariantError",
    "MotzkinStrausResult",
    "SpectralSummary",
    "WeightedGraph",
    "clique_number",
    "connected_components",
    "largest_eigenvalue",
    "motzkin_straus_optimize",
    "spectral_summary",
    "RateProfile",
    "TransitionLadder",
    "phi",
    "psi",
    "transition_points",
    "ModelParams",
    "decompose",
    "plan_decomposition",
    "plant_clique",
    "sample_network",
]
