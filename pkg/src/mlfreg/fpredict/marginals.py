"""Support posteriors and the L x L marginal matrices consumed by GFM."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from ..core import LabelVector, SupportSet
from ..estimators.base import JointEstimator, as_rows


@dataclass(frozen=True, eq=False)
class SupportPosterior:
    combinations: tuple[LabelVector, ...]
    probabilities: np.ndarray

    def __post_init__(self):
        combos = tuple(self.combinations)
        probs = np.array(self.probabilities, dtype=float)
        if len(combos) != len(probs):
            raise ValueError("combinations and probabilities differ in length")
        if len({y.key for y in combos}) != len(combos):
            raise ValueError("duplicate combinations in posterior")
        if (probs < 0).any() or abs(probs.sum() - 1.0) > 1e-12 * max(1, len(probs)):
            raise ValueError("posterior probabilities must be nonnegative and sum to 1")
        probs.setflags(write=False)
        object.__setattr__(self, "combinations", combos)
        object.__setattr__(self, "probabilities", probs)

    @property
    def num_labels(self) -> int:
        return self.combinations[0].num_labels

    def matrix(self) -> np.ndarray:
        out = np.zeros((len(self.combinations), self.num_labels))
        for s, y in enumerate(self.combinations):
            out[s, list(y.labels)] = 1.0
        return out

    def probability(self, y: LabelVector) -> float:
        for c, p in zip(self.combinations, self.probabilities):
            if c.key == y.key:
                return float(p)
        return 0.0


@dataclass(frozen=True, eq=False)
class MarginalMatrix:
    """``p[l, s-1] = p(y_l = 1, |y| = s | x)`` plus ``p_empty = p(y = 0 | x)``."""

    p: np.ndarray
    p_empty: float

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("marginal matrix must be L x L")
        if (p < 0).any() or (p > 1 + 1e-12).any() or not 0 <= self.p_empty <= 1 + 1e-12:
            raise ValueError("marginal entries must lie in [0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "p_empty", float(self.p_empty))

    @property
    def num_labels(self) -> int:
        return self.p.shape[0]

    def cardinality_distribution(self) -> np.ndarray:
        """q_s for s = 1..L, recovered as column sums divided by s."""
        return self.p.sum(axis=0) / np.arange(1, self.num_labels + 1)


def posterior_matrix(estimator: JointEstimator, X, support: SupportSet) -> np.ndarray:
    """Renormalized p(y|x) over the support combinations, N x |support|."""
    if len(support) == 0:
        raise ValueError("support must be nonempty")
    scores = estimator.log_joint_matrix(as_rows(X, estimator.num_features), support.matrix)
    return np.exp(scores - logsumexp(scores, axis=1, keepdims=True))


def support_posterior(estimator: JointEstimator, x, support: SupportSet) -> SupportPosterior:
    return SupportPosterior(support.combinations, posterior_matrix(estimator, x, support)[0])


def marginal_tensor(post: np.ndarray, combos: np.ndarray):
    """Batch form: posteriors N x S over 0/1 combinations S x L -> (N x L x L, N)."""
    combos = np.asarray(combos, dtype=float)
    L = combos.shape[1]
    card = combos.sum(axis=1).astype(int)
    onehot = np.zeros((len(card), L + 1))
    onehot[np.arange(len(card)), card] = 1.0
    P = np.einsum("ns,sl,sk->nlk", post, combos, onehot[:, 1:])
    return P, post @ onehot[:, 0]


def marginals_from_posterior(post: SupportPosterior, num_labels: int | None = None) -> MarginalMatrix:
    if num_labels is not None and num_labels != post.num_labels:
        raise ValueError("label space mismatch")
    P, empty = marginal_tensor(post.probabilities[None, :], post.matrix())
    return MarginalMatrix(np.clip(P[0], 0.0, 1.0), float(min(empty[0], 1.0)))


def sample_marginal_tensor(samples: np.ndarray) -> tuple[np.ndarray, float]:
    samples = np.asarray(samples, dtype=float)
    M, L = samples.shape
    card = samples.sum(axis=1).astype(int)
    onehot = np.zeros((M, L + 1))
    onehot[np.arange(M), card] = 1.0
    return samples.T @ onehot[:, 1:] / M, float(onehot[:, 0].sum() / M)


def marginals_from_samples(samples: Sequence[LabelVector] | np.ndarray, num_labels: int) -> MarginalMatrix:
    """Empirical marginals; every draw counts, duplicates included."""
    if len(samples) == 0:
        raise ValueError("at least one sample is required")
    if not isinstance(samples, np.ndarray):
        samples = np.array([y.to_bits() for y in samples])
    if samples.shape[1] != num_labels:
        raise ValueError("label space mismatch")
    p, empty = sample_marginal_tensor(samples)
    return MarginalMatrix(p, empty)


def support_map(post: SupportPosterior) -> LabelVector:
    """Most probable support combination; ties go to the smallest canonical key."""
    best = max(post.probabilities)
    return min((y for y, p in zip(post.combinations, post.probabilities) if p == best), key=lambda y: y.key)
