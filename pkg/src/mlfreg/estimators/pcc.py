"""Probabilistic classifier chains.

The model at chain position ``j`` predicts label ``order[j]`` from the D text
features followed by the ``j`` earlier labels of the chain (as raw 0/1
features, in chain order).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, log_expit

from ..core import LabelVector, MultiLabelDataset
from ..linreg import EarlyStopConfig, ElasticNetConfig, ElasticNetTrainer, LinearModel, train_with_early_stopping
from .base import CompositeTrainer, JointEstimator, as_rows, matmul


@dataclass(frozen=True, eq=False)
class PccModel(JointEstimator):
    order: tuple[int, ...]
    models: tuple[LinearModel, ...]
    kind = "PCC"

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(int(l) for l in self.order))
        object.__setattr__(self, "models", tuple(self.models))
        L = len(self.order)
        if sorted(self.order) != list(range(L)):
            raise ValueError("order must be a permutation of the label ids")
        if len(self.models) != L:
            raise ValueError("one model per chain position is required")
        D = self.models[0].num_features
        for j, m in enumerate(self.models):
            if m.num_features != D + j:
                raise ValueError(f"chain model {j} must have dimension D+{j}")
        # text-feature margins for all positions at once, plus per-position label weights
        base_W = np.array([m.coef[1, :D] - m.coef[0, :D] for m in self.models])
        base_b = np.array([m.intercept[1] - m.intercept[0] for m in self.models])
        prev = [m.coef[1, D:] - m.coef[0, D:] for m in self.models]
        object.__setattr__(self, "_base_W", base_W)
        object.__setattr__(self, "_base_b", base_b)
        object.__setattr__(self, "_prev", prev)

    @property
    def num_labels(self) -> int:
        return len(self.order)

    @property
    def num_features(self) -> int:
        return self.models[0].num_features

    def base_margins(self, X) -> np.ndarray:
        """Contribution of the text features to each chain position's margin (N x L)."""
        X = as_rows(X, self.num_features)
        return matmul(X, self._base_W.T) + self._base_b

    def log_joint_matrix(self, X, Y) -> np.ndarray:
        base = self.base_margins(X)
        Y = np.asarray(Y, dtype=float)
        chain = Y[:, list(self.order)]  # combos re-indexed by chain position
        out = np.zeros((base.shape[0], Y.shape[0]))
        for j in range(self.num_labels):
            m = base[:, j : j + 1] + (chain[:, :j] @ self._prev[j])[None, :]
            yj = chain[:, j][None, :]
            out += yj * log_expit(m) + (1.0 - yj) * log_expit(-m)
        return out

    def sample_matrix(self, x, size, rng):
        base = self.base_margins(x)[0]
        chain = np.zeros((size, self.num_labels))
        u = rng.random((size, self.num_labels))
        for j in range(self.num_labels):
            p = expit(base[j] + chain[:, :j] @ self._prev[j])
            chain[:, j] = u[:, j] < p
        out = np.zeros_like(chain, dtype=np.int8)
        out[:, list(self.order)] = chain
        return out

    def beam_search(self, x, beam_width: int) -> np.ndarray:
        """Approximate MAP for one instance; returns 0/1 bits in label-id order."""
        if beam_width < 1:
            raise ValueError("beam width must be >= 1")
        base = self.base_margins(x)[0]
        beam = [((), 0.0)]
        for j in range(self.num_labels):
            candidates = []
            for prefix, score in beam:
                m = base[j] + (np.dot(prefix, self._prev[j]) if j else 0.0)
                candidates.append((prefix + (1,), score + float(log_expit(m))))
                candidates.append((prefix + (0,), score + float(log_expit(-m))))
            # stable sort keeps the label-on branch first on exact ties
            candidates.sort(key=lambda c: -c[1])
            beam = candidates[:beam_width]
        chain = np.array(beam[0][0])
        out = np.zeros(self.num_labels, dtype=np.int8)
        out[list(self.order)] = chain
        return out

    def map_matrix(self, X, beam_width: int = 5, **params) -> np.ndarray:
        X = as_rows(X, self.num_features)
        return np.array([self.beam_search(X[i], beam_width) for i in range(X.shape[0])], dtype=np.int8)


def chain_design(X, Y, order, position: int):
    """Text features augmented with the ground-truth labels preceding ``position``."""
    prev = np.asarray(Y, dtype=float)[:, list(order[:position])]
    return sp.hstack([sp.csr_matrix(X), sp.csr_matrix(prev)], format="csc")


class PccTrainer(CompositeTrainer):
    def __init__(self, dataset: MultiLabelDataset, order, config: ElasticNetConfig):
        order = tuple(range(dataset.num_labels)) if order is None else tuple(order)
        if sorted(order) != list(range(dataset.num_labels)):
            raise ValueError("order must be a permutation of the label ids")
        self.order = order
        Y = dataset.Y.astype(float)
        trainers = []
        for j, l in enumerate(order):
            Xj = chain_design(dataset.X, Y, order, j)
            trainers.append(ElasticNetTrainer(Xj, np.column_stack([1.0 - Y[:, l], Y[:, l]]), config))
        super().__init__(trainers, config.max_iterations)

    def snapshot(self) -> PccModel:
        return PccModel(self.order, [t.snapshot() for t in self.trainers])


def pcc_train(dataset: MultiLabelDataset, order=None, en_config: ElasticNetConfig = ElasticNetConfig(),
              stop: EarlyStopConfig | None = None, validation_score=None) -> PccModel:
    trainer = PccTrainer(dataset, order, en_config)
    if stop is None or validation_score is None:
        trainer.run(en_config.max_iterations)
        return trainer.snapshot()
    return train_with_early_stopping(trainer, validation_score, stop).model


def pcc_map_beam(model: PccModel, x, beam_width: int) -> LabelVector:
    return LabelVector.from_bits(model.beam_search(as_rows(x, model.num_features), beam_width))
