"""LSF baseline: estimate the GFM marginals directly instead of from a joint.

p(y_l=1, |y|=s | x) is modelled as p(y_l=1|x) * p(|y|=s | x, y_l=1), with one
binary and one L-class softmax regression per label.  p(y=0|x) comes from an
extra binary model on the indicator of an empty label set.  Nothing forces the
resulting matrix to be a coherent distribution; GFM consumes it as is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..core import MultiLabelDataset
from ..estimators.base import CompositeTrainer, as_rows, matmul, stack_binary
from ..linreg import EarlyStopConfig, ElasticNetConfig, ElasticNetTrainer, LinearModel, train_with_early_stopping
from .marginals import MarginalMatrix


@dataclass(frozen=True, eq=False)
class LsfModel:
    marginal_models: tuple[LinearModel, ...]
    cardinality_models: tuple[LinearModel, ...]  # empty when L == 1
    empty_model: LinearModel
    kind = "LSF"

    def __post_init__(self):
        object.__setattr__(self, "marginal_models", tuple(self.marginal_models))
        object.__setattr__(self, "cardinality_models", tuple(self.cardinality_models))
        L = len(self.marginal_models)
        if L > 1 and (len(self.cardinality_models) != L or any(m.num_classes != L for m in self.cardinality_models)):
            raise ValueError("need one L-class cardinality model per label")
        W, b = stack_binary(self.marginal_models)
        object.__setattr__(self, "_W", W)
        object.__setattr__(self, "_b", b)

    @property
    def num_labels(self) -> int:
        return len(self.marginal_models)

    @property
    def num_features(self) -> int:
        return self.marginal_models[0].num_features

    def marginal_tensor(self, X):
        X = as_rows(X, self.num_features)
        marg = expit(matmul(X, self._W.T) + self._b)  # N x L
        if self.num_labels == 1:
            P = marg[:, :, None]
        else:
            card = np.stack([m.predict_proba(X) for m in self.cardinality_models], axis=1)  # N x L x L
            P = marg[:, :, None] * card
        empty = self.empty_model.predict_proba(X)[:, 1]
        return P, empty

    def all_models(self):
        return [*self.marginal_models, *self.cardinality_models, self.empty_model]


def lsf_marginals(model: LsfModel, x) -> MarginalMatrix:
    P, empty = model.marginal_tensor(x)
    return MarginalMatrix(P[0], float(empty[0]))


def _prior_model(counts: np.ndarray, num_features: int) -> LinearModel:
    prior = (counts + 1e-3) / (counts + 1e-3).sum()
    return LinearModel(np.zeros((len(counts), num_features)), np.log(prior))


class _FixedModel:
    """Stands in for a trainer when a model needs no fitting."""

    converged = True

    def __init__(self, model):
        self.model = model

    def run(self, iterations):
        return 0

    def snapshot(self):
        return self.model


class LsfTrainer(CompositeTrainer):
    def __init__(self, dataset: MultiLabelDataset, config: ElasticNetConfig):
        X = dataset.X.tocsr()
        Y = dataset.Y.astype(float)
        L, D = dataset.num_labels, dataset.num_features
        sizes = Y.sum(axis=1).astype(int)
        self.L = L
        trainers = [ElasticNetTrainer(X, np.column_stack([1.0 - Y[:, l], Y[:, l]]), config) for l in range(L)]
        if L > 1:
            global_counts = np.bincount(sizes[sizes > 0] - 1, minlength=L).astype(float)
            for l in range(L):
                rows = np.flatnonzero(Y[:, l] > 0)
                if len(rows) == 0:
                    trainers.append(_FixedModel(_prior_model(global_counts, D)))
                    continue
                T = np.zeros((len(rows), L))
                T[np.arange(len(rows)), sizes[rows] - 1] = 1.0
                trainers.append(ElasticNetTrainer(X[rows], T, config))
        empty = (sizes == 0).astype(float)
        trainers.append(ElasticNetTrainer(X, np.column_stack([1.0 - empty, empty]), config))
        super().__init__(trainers, config.max_iterations)

    def snapshot(self) -> LsfModel:
        models = [t.snapshot() for t in self.trainers]
        L = self.L
        return LsfModel(models[:L], models[L:-1], models[-1])


def lsf_train(dataset: MultiLabelDataset, en_config: ElasticNetConfig, stop: EarlyStopConfig | None = None,
              validation_score=None) -> LsfModel:
    trainer = LsfTrainer(dataset, en_config)
    if stop is None or validation_score is None:
        trainer.run(en_config.max_iterations)
        return trainer.snapshot()
    return train_with_early_stopping(trainer, validation_score, stop).model
