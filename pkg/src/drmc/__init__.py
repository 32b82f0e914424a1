"""Distantly supervised multi-label classification as noise-tolerant
low-rank matrix completion (DRMC-b and DRMC-1)."""

__version__ = "0.1.0"

from .errors import DrmcError
from .inference import GoldLabels, average_f1, predict_probabilities, rank_predictions
from .matrix import ProblemInstance, Variant, ZeroPolicy, assemble_joint
from .rank_selection import estimate_rank
from .solver import SolverConfig, solve, solve_to_rank

__all__ = [
    "DrmcError", "GoldLabels", "ProblemInstance", "SolverConfig", "Variant", "ZeroPolicy",
    "assemble_joint", "average_f1", "estimate_rank", "predict_probabilities",
    "rank_predictions", "solve", "solve_to_rank",
]
