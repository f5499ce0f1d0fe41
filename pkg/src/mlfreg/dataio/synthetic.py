"""Synthetic multi-label data with clustered, dependent labels.

Every instance belongs to one latent cluster.  A cluster owns a block of
relevant features (each active with ``active_probability``) and a
characteristic label set; labels are then flipped independently with
``noise_rate``.  A fixed fraction of features is pure noise, active with the
same low probability in every cluster, so an L1 penalty should drop them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp

from ..core import MultiLabelDataset


@dataclass(frozen=True)
class SyntheticSpec:
    N: int = 2000
    D: int = 200
    L: int = 8
    K_true: int = 6
    noise_rate: float = 0.05
    irrelevant_feature_fraction: float = 0.5
    seed: int = 0
    active_probability: float = 0.25
    cross_probability: float = 0.04
    noise_feature_probability: float = 0.08
    max_cluster_labels: int = 3
    cluster_label_sets: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        if min(self.N, self.D, self.L, self.K_true) < 1:
            raise ValueError("N, D, L and K_true must be positive")
        if not 0.0 <= self.noise_rate < 1.0:
            raise ValueError("noise_rate must lie in [0, 1)")
        if not 0.0 <= self.irrelevant_feature_fraction < 1.0:
            raise ValueError("irrelevant_feature_fraction must lie in [0, 1)")
        if self.cluster_label_sets is not None and len(self.cluster_label_sets) != self.K_true:
            raise ValueError("need one label set per cluster")


@dataclass(frozen=True, eq=False)
class SyntheticTruth:
    cluster_ids: np.ndarray
    cluster_label_sets: tuple[tuple[int, ...], ...]
    relevant_features: tuple[int, ...]
    noise_features: tuple[int, ...]
    cluster_features: tuple[tuple[int, ...], ...]
    activity: np.ndarray = field(repr=False)  # K x D activation probabilities
    cluster_posterior: np.ndarray = field(repr=False)  # N x K, p(z=k | x)
    noise_rate: float = 0.0

    def true_marginals(self, num_labels: int) -> np.ndarray:
        """p(y_l = 1 | x) under the generating process (N x L)."""
        B = np.zeros((len(self.cluster_label_sets), num_labels))
        for k, labels in enumerate(self.cluster_label_sets):
            B[k, list(labels)] = 1.0
        on = B * (1.0 - self.noise_rate) + (1.0 - B) * self.noise_rate
        return self.cluster_posterior @ on


def _cluster_label_sets(spec: SyntheticSpec, rng) -> tuple[tuple[int, ...], ...]:
    if spec.cluster_label_sets is not None:
        return tuple(tuple(sorted(s)) for s in spec.cluster_label_sets)
    sets: list[tuple[int, ...]] = []
    limit = min(spec.max_cluster_labels, spec.L)
    for _ in range(100 * spec.K_true):
        if len(sets) == spec.K_true:
            break
        size = int(rng.integers(1, limit + 1))
        cand = tuple(sorted(int(l) for l in rng.choice(spec.L, size=size, replace=False)))
        if cand not in sets:
            sets.append(cand)
    while len(sets) < spec.K_true:  # label space too small for distinct sets
        sets.append(sets[len(sets) % max(len(sets), 1)])
    return tuple(sets)


def generate_synthetic(spec: SyntheticSpec) -> tuple[MultiLabelDataset, SyntheticTruth]:
    rng = np.random.default_rng(spec.seed)
    n_noise = int(np.floor(spec.irrelevant_feature_fraction * spec.D + 0.5))
    perm = rng.permutation(spec.D)
    noise = np.sort(perm[:n_noise])
    relevant = perm[n_noise:]
    blocks = [np.sort(b) for b in np.array_split(relevant, spec.K_true)]

    activity = np.full((spec.K_true, spec.D), spec.cross_probability)
    activity[:, noise] = spec.noise_feature_probability
    for k, block in enumerate(blocks):
        activity[k, block] = spec.active_probability

    label_sets = _cluster_label_sets(spec, rng)
    z = rng.integers(0, spec.K_true, size=spec.N)
    active = rng.random((spec.N, spec.D)) < activity[z]
    values = np.where(active, rng.uniform(0.5, 1.0, size=(spec.N, spec.D)), 0.0)

    base = np.zeros((spec.K_true, spec.L), dtype=np.int8)
    for k, labels in enumerate(label_sets):
        base[k, list(labels)] = 1
    flips = rng.random((spec.N, spec.L)) < spec.noise_rate
    Y = base[z] ^ flips.astype(np.int8)

    # exact cluster posterior: feature activity is Bernoulli given the cluster, values share one law
    A = active.astype(float)
    loglik = A @ np.log(activity).T + (1.0 - A) @ np.log1p(-activity).T
    post = np.exp(loglik - logsumexp(loglik, axis=1, keepdims=True))

    ds = MultiLabelDataset.from_arrays(sp.csr_matrix(values), Y)
    truth = SyntheticTruth(
        cluster_ids=z,
        cluster_label_sets=label_sets,
        relevant_features=tuple(int(j) for j in np.sort(relevant)),
        noise_features=tuple(int(j) for j in noise),
        cluster_features=tuple(tuple(int(j) for j in b) for b in blocks),
        activity=activity,
        cluster_posterior=post,
        noise_rate=spec.noise_rate,
    )
    return ds, truth
