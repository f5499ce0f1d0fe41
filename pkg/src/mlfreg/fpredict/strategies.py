"""Batch prediction under the four prediction strategies."""

from __future__ import annotations

import numpy as np

from ..core import LabelVector, SupportSet
from ..estimators.base import JointEstimator, UnsupportedOperation, as_rows
from .gfm import gfm_batch
from .lsf import LsfModel
from .marginals import marginal_tensor, posterior_matrix, sample_marginal_tensor

STRATEGIES = ("map", "support-map", "support-gfm", "sample-gfm")
DEFAULT_SAMPLE_COUNT = 1000


def map_predict(estimator: JointEstimator, x, support: SupportSet | None = None, beam_width: int = 5) -> LabelVector:
    bits = estimator.map_matrix(as_rows(x, estimator.num_features), support=support, beam_width=beam_width)
    return LabelVector.from_bits(bits[0])


def support_map_matrix(post: np.ndarray, support: SupportSet) -> np.ndarray:
    # visit combinations in canonical-key order so argmax breaks ties toward the smallest key
    by_key = np.array(sorted(range(len(support)), key=lambda s: support.combinations[s].key))
    return support.matrix[by_key[np.argmax(post[:, by_key], axis=1)]].astype(np.int8)


def sampled_marginals(estimator: JointEstimator, X, sample_count: int, rng: np.random.Generator):
    X = as_rows(X, estimator.num_features)
    N, L = X.shape[0], estimator.num_labels
    P = np.empty((N, L, L))
    empty = np.empty(N)
    for i in range(N):
        P[i], empty[i] = sample_marginal_tensor(estimator.sample_matrix(X[i], sample_count, rng))
    return P, empty


def predict(model, X, strategy: str = "support-gfm", support: SupportSet | None = None, beam_width: int = 5,
            sample_count: int = DEFAULT_SAMPLE_COUNT, rng: np.random.Generator | None = None) -> np.ndarray:
    """Predict 0/1 label matrices for every row of ``X``."""
    if isinstance(model, LsfModel):
        P, empty = model.marginal_tensor(X)
        return gfm_batch(P, empty)[0]
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown prediction strategy {strategy!r}")
    X = as_rows(X, model.num_features)
    if strategy == "map":
        return model.map_matrix(X, support=support, beam_width=beam_width)
    if strategy == "sample-gfm":
        if model.kind == "CRF":
            raise UnsupportedOperation("CRF has no sampler; use a support strategy")
        rng = np.random.default_rng(0) if rng is None else rng
        P, empty = sampled_marginals(model, X, sample_count, rng)
        return gfm_batch(P, empty)[0]
    if support is None:
        raise ValueError(f"strategy {strategy!r} needs a support set")
    post = posterior_matrix(model, X, support)
    if strategy == "support-map":
        return support_map_matrix(post, support)
    P, empty = marginal_tensor(post, support.matrix)
    return gfm_batch(P, empty)[0]
