"""Prediction-time regularization: support inference, GFM and baselines."""

from .gfm import FPrediction, brute_force_best, brute_force_expected_f1, gfm, gfm_batch
from .lsf import LsfModel, LsfTrainer, lsf_marginals, lsf_train
from .marginals import (
    MarginalMatrix,
    SupportPosterior,
    marginal_tensor,
    marginals_from_posterior,
    marginals_from_samples,
    posterior_matrix,
    support_map,
    support_posterior,
)
from .strategies import STRATEGIES, map_predict, predict

__all__ = [
    "FPrediction", "LsfModel", "LsfTrainer", "MarginalMatrix", "STRATEGIES", "SupportPosterior",
    "brute_force_best", "brute_force_expected_f1", "gfm", "gfm_batch", "lsf_marginals", "lsf_train",
    "map_predict", "marginal_tensor", "marginals_from_posterior", "marginals_from_samples", "posterior_matrix",
    "predict", "support_map", "support_posterior",
]
