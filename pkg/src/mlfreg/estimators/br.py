"""Binary relevance: one logistic regression per label, p(y|x) = prod_l p(y_l|x)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from ..core import MultiLabelDataset
from ..linreg import (
    EarlyStopConfig,
    ElasticNetConfig,
    ElasticNetTrainer,
    LinearModel,
    train_with_early_stopping,
)
from .base import CompositeTrainer, JointEstimator, as_rows, matmul, stack_binary


@dataclass(frozen=True, eq=False)
class BrModel(JointEstimator):
    models: tuple[LinearModel, ...]
    kind = "BR"

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        if not self.models:
            raise ValueError("BR needs at least one label model")
        if len({m.num_features for m in self.models}) != 1:
            raise ValueError("all label models must share the feature dimension")
        W, b = stack_binary(self.models)
        object.__setattr__(self, "_W", W)
        object.__setattr__(self, "_b", b)

    @property
    def num_labels(self) -> int:
        return len(self.models)

    @property
    def num_features(self) -> int:
        return self.models[0].num_features

    def margins(self, X) -> np.ndarray:
        X = as_rows(X, self.num_features)
        return matmul(X, self._W.T) + self._b

    def marginals(self, X) -> np.ndarray:
        """p(y_l = 1 | x) as an N x L matrix."""
        return expit(self.margins(X))

    def log_joint_matrix(self, X, Y) -> np.ndarray:
        M = self.margins(X)
        Y = np.asarray(Y, dtype=float)
        return log_expit(M) @ Y.T + log_expit(-M) @ (1.0 - Y).T

    def sample_matrix(self, x, size, rng):
        p = self.marginals(x)[0]
        return (rng.random((size, self.num_labels)) < p).astype(np.int8)

    def map_matrix(self, X, **params) -> np.ndarray:
        # a marginal of exactly 0.5 is excluded
        return (self.margins(X) > 0).astype(np.int8)


class BrTrainer(CompositeTrainer):
    def __init__(self, dataset: MultiLabelDataset, config: ElasticNetConfig):
        X = dataset.X.tocsc()
        Y = dataset.Y.astype(float)
        trainers = [ElasticNetTrainer(X, np.column_stack([1.0 - Y[:, l], Y[:, l]]), config) for l in range(dataset.num_labels)]
        super().__init__(trainers, config.max_iterations)

    def snapshot(self) -> BrModel:
        return BrModel([t.snapshot() for t in self.trainers])


def br_train(dataset: MultiLabelDataset, en_config: ElasticNetConfig, stop: EarlyStopConfig | None = None,
             validation_score=None) -> BrModel:
    """Train one elastic-net logistic regression per label.

    With ``stop`` and ``validation_score`` set, all label models advance
    together and the jointly best checkpoint is returned.
    """
    trainer = BrTrainer(dataset, en_config)
    if stop is None or validation_score is None:
        trainer.run(en_config.max_iterations)
        return trainer.snapshot()
    return train_with_early_stopping(trainer, validation_score, stop).model
