"""Nuclear-norm matrix completion for matrices with smooth latent structure."""

__version__ = "0.1.0"

from .estimator import (CompletionResult, LambdaGrid, OracleSVTCompleter, SVTCompleter, complete,
                        objective_value, oracle_select, theoretical_lambda)
from .linalg import frobenius_mse, nuclear_norm, operator_norm, soft_threshold_svd, svd
from .manifold import EmbeddingSpec, equispaced_theta, generate_matrix
from .rng import Rng
from .sampling import ObservationSet, build_R, empirical_delta, observe, sample_masks

__all__ = [
    "CompletionResult",
    "EmbeddingSpec",
    "LambdaGrid",
    "ObservationSet",
    "OracleSVTCompleter",
    "Rng",
    "SVTCompleter",
    "build_R",
    "complete",
    "empirical_delta",
    "equispaced_theta",
    "frobenius_mse",
    "generate_matrix",
    "nuclear_norm",
    "objective_value",
    "observe",
    "operator_norm",
    "oracle_select",
    "sample_masks",
    "soft_threshold_svd",
    "svd",
    "theoretical_lambda",
]
