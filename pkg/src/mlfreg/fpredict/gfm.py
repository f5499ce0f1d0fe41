"""General F-measure maximizer and a brute-force expected-F oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import LabelVector, all_combinations
from .marginals import MarginalMatrix, SupportPosterior

MAX_ENUMERATION_LABELS = 20


@dataclass(frozen=True)
class FPrediction:
    labels: LabelVector
    expected_f1: float
    cardinality: int


def gfm_weights(num_labels: int) -> np.ndarray:
    s = np.arange(1, num_labels + 1)
    return 2.0 / (s[:, None] + s[None, :])


def gfm_batch(P: np.ndarray, p_empty: np.ndarray):
    """Vectorized GFM over N instances.

    ``P`` is N x L x L with ``P[n, l, s-1] = p(y_l=1, |y|=s | x_n)``.  Returns
    (0/1 predictions N x L, expected F N, chosen cardinality N).
    """
    P = np.asarray(P, dtype=float)
    N, L, _ = P.shape
    delta = P @ gfm_weights(L)  # delta[n, l, s-1]
    # stable sort on -delta keeps the smaller label id first on ties
    order = np.argsort(-delta, axis=1, kind="stable")
    ranked = np.take_along_axis(delta, order, axis=1)
    top = np.cumsum(ranked, axis=1)  # top[n, r-1, s-1]: sum of the r best labels for size s
    s_idx = np.arange(L)
    expected = np.empty((N, L + 1))
    expected[:, 0] = p_empty
    expected[:, 1:] = top[:, s_idx, s_idx]
    best = np.argmax(expected, axis=1)  # first maximum = smallest s on ties
    Y = np.zeros((N, L), dtype=np.int8)
    for n in range(N):
        s = best[n]
        if s:
            Y[n, order[n, :s, s - 1]] = 1
    return Y, expected[np.arange(N), best], best


def gfm(m: MarginalMatrix) -> FPrediction:
    Y, ef, s = gfm_batch(m.p[None], np.array([m.p_empty]))
    return FPrediction(LabelVector.from_bits(Y[0]), float(ef[0]), int(s[0]))


def f1_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Instance F1 between every row of A and every row of B, with F(empty, empty) = 1."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    inter = A @ B.T
    denom = A.sum(axis=1)[:, None] + B.sum(axis=1)[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom > 0, 2.0 * inter / denom, 1.0)
    return out


def _as_distribution(post):
    if isinstance(post, SupportPosterior):
        return post.matrix(), post.probabilities
    combos, probs = post
    return np.asarray(combos, dtype=float), np.asarray(probs, dtype=float)


def brute_force_expected_f1(post, candidate: LabelVector) -> float:
    """Exact E_{y~post}[F(y, candidate)] by enumerating the distribution's combinations."""
    combos, probs = _as_distribution(post)
    if combos.shape[1] > MAX_ENUMERATION_LABELS:
        raise ValueError(f"enumeration limited to L <= {MAX_ENUMERATION_LABELS}")
    return float(f1_matrix(candidate.to_bits()[None, :], combos)[0] @ probs)


def brute_force_best(post) -> FPrediction:
    """Exhaustive argmax of expected F over all 2^L candidate predictions."""
    combos, probs = _as_distribution(post)
    L = combos.shape[1]
    if L > MAX_ENUMERATION_LABELS:
        raise ValueError(f"enumeration limited to L <= {MAX_ENUMERATION_LABELS}")
    candidates = all_combinations(L)
    scores = f1_matrix(candidates, combos) @ probs
    best = int(np.argmax(scores))
    y = LabelVector.from_bits(candidates[best])
    return FPrediction(y, float(scores[best]), y.cardinality())
