"""Conditional Bernoulli mixtures trained by (generalized) EM.

    p(y|x) = sum_k pi(z=k|x) prod_l b(y_l|x, z=k)

The gating network pi is a K-class softmax regression and every component
holds L binary logistic regressions.  Each EM iteration runs a capped number
of coordinate-descent sweeps per M-step, warm-started from the previous
iteration, so the penalized observed-data log-likelihood never decreases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_expit, logsumexp

from ..core import MultiLabelDataset
from ..linreg import EarlyStopConfig, ElasticNetConfig, ElasticNetTrainer, LinearModel, train_with_early_stopping
from .base import JointEstimator, as_rows, matmul, stack_binary


@dataclass(frozen=True, eq=False)
class CbmModel(JointEstimator):
    gating: LinearModel
    components: tuple[tuple[LinearModel, ...], ...]
    kind = "CBM"

    def __post_init__(self):
        comps = tuple(tuple(c) for c in self.components)
        object.__setattr__(self, "components", comps)
        if self.gating.num_classes != len(comps):
            raise ValueError("gating must have one class per component")
        if len({len(c) for c in comps}) != 1:
            raise ValueError("every component needs the same number of label models")
        D = self.gating.num_features
        if any(m.num_features != D for c in comps for m in c):
            raise ValueError("all component models must share the gating dimension")
        stacked = [stack_binary(c) for c in comps]
        object.__setattr__(self, "_W", np.concatenate([W for W, _ in stacked]))  # (K*L) x D
        object.__setattr__(self, "_b", np.concatenate([b for _, b in stacked]))

    @property
    def num_components(self) -> int:
        return len(self.components)

    @property
    def num_labels(self) -> int:
        return len(self.components[0])

    @property
    def num_features(self) -> int:
        return self.gating.num_features

    def component_margins(self, X) -> np.ndarray:
        """Margins of b(y_l=1|x,z=k) as an N x K x L array."""
        X = as_rows(X, self.num_features)
        M = matmul(X, self._W.T) + self._b
        return M.reshape(X.shape[0], self.num_components, self.num_labels)

    def log_gating(self, X) -> np.ndarray:
        return self.gating.predict_log_proba(as_rows(X, self.num_features))

    def component_log_likelihood(self, X, Y) -> np.ndarray:
        """log prod_l b(y_l|x,k) for every (instance, component, combination): N x K x S."""
        M = self.component_margins(X)
        Y = np.asarray(Y, dtype=float)
        return log_expit(M) @ Y.T + log_expit(-M) @ (1.0 - Y).T

    def log_joint_matrix(self, X, Y) -> np.ndarray:
        return logsumexp(self.log_gating(X)[:, :, None] + self.component_log_likelihood(X, Y), axis=1)

    def paired_log_likelihood(self, X, Y) -> np.ndarray:
        """log pi_k + log prod_l b(y_il|x_i,k) for row-aligned (x_i, y_i): N x K."""
        M = self.component_margins(X)
        Y = np.asarray(Y, dtype=float)[:, None, :]
        comp = (Y * log_expit(M) + (1.0 - Y) * log_expit(-M)).sum(axis=2)
        return self.log_gating(X) + comp

    def sample_matrix(self, x, size, rng):
        pi = np.exp(self.log_gating(x)[0])
        z = rng.choice(self.num_components, size=size, p=pi / pi.sum())
        p = 1.0 / (1.0 + np.exp(-self.component_margins(x)[0]))  # K x L
        return (rng.random((size, self.num_labels)) < p[z]).astype(np.int8)

    def map_matrix(self, X, support=None, **params) -> np.ndarray:
        # support-restricted MAP stands in for the exact dynamic program
        if support is None:
            raise ValueError("CBM MAP prediction needs a support set")
        scores = self.log_joint_matrix(X, support.matrix)
        return support.matrix[np.argmax(scores, axis=1)].astype(np.int8)


class CbmTrainer:
    """Resumable EM; one iteration is an E-step followed by a partial M-step."""

    def __init__(self, dataset: MultiLabelDataset, num_components: int, config: ElasticNetConfig,
                 seed: int = 0, inner_iterations: int = 5, max_em_iterations: int = 100,
                 em_tolerance: float = 1e-7):
        if num_components < 1:
            raise ValueError("CBM needs at least one component")
        self.K = num_components
        self.L = dataset.num_labels
        self.D = dataset.num_features
        self.N = len(dataset)
        self.X = dataset.X.tocsc()
        self.Y = dataset.Y.astype(float)
        self.config = config
        self.inner = ElasticNetConfig(config.lam, config.alpha, inner_iterations, config.convergence_tolerance)
        self._max = max_em_iterations
        self.em_tolerance = em_tolerance
        self.rng = np.random.default_rng(seed)
        self.degenerate_rows = 0
        self.iteration = 0
        self.converged = False
        self.objective_trace: list[float] = []
        self.loglik_trace: list[float] = []

        gamma = 1.0 / self.K + self.rng.dirichlet(np.ones(self.K), size=self.N)
        gamma /= gamma.sum(axis=1, keepdims=True)
        self.gating = LinearModel.zeros(self.K, self.D)
        self.components = [[LinearModel.zeros(2, self.D) for _ in range(self.L)] for _ in range(self.K)]
        self._m_step(gamma)
        self._record()

    @property
    def max_iterations(self) -> int:
        return self._max

    def _m_step(self, gamma: np.ndarray):
        # every sub-problem is normalized by N so the M-step maximizes the penalized Q function
        if self.K > 1:
            self.gating = ElasticNetTrainer(self.X, gamma, self.inner, normalizer=self.N, init=self.gating).fit()
        for k in range(self.K):
            g = gamma[:, k]
            for l in range(self.L):
                T = np.column_stack([g * (1.0 - self.Y[:, l]), g * self.Y[:, l]])
                if T.sum() <= 0:
                    continue
                self.components[k][l] = ElasticNetTrainer(
                    self.X, T, self.inner, normalizer=self.N, init=self.components[k][l]
                ).fit()

    def _e_step(self) -> np.ndarray:
        joint = self.snapshot().paired_log_likelihood(self.X, self.Y)
        log_norm = logsumexp(joint, axis=1, keepdims=True)
        bad = ~np.isfinite(log_norm[:, 0])
        gamma = np.exp(joint - np.where(bad[:, None], 0.0, log_norm))
        if bad.any():
            self.degenerate_rows += int(bad.sum())
            gamma[bad] = 1.0 / self.K
        return gamma

    def penalty(self) -> float:
        total = self.gating.penalty(self.config)
        return total + sum(m.penalty(self.config) for comp in self.components for m in comp)

    def _record(self):
        joint = self.snapshot().paired_log_likelihood(self.X, self.Y)
        loglik = float(logsumexp(joint, axis=1).sum())
        self.loglik_trace.append(loglik)
        self.objective_trace.append(loglik / self.N - self.penalty())

    def run(self, iterations: int) -> int:
        done = 0
        while done < iterations and self.iteration < self._max and not self.converged:
            self._m_step(self._e_step())
            self.iteration += 1
            done += 1
            self._record()
            if abs(self.objective_trace[-1] - self.objective_trace[-2]) < self.em_tolerance:
                self.converged = True
        return done

    def snapshot(self) -> CbmModel:
        return CbmModel(self.gating, [tuple(c) for c in self.components])


def cbm_train_em(dataset: MultiLabelDataset, K: int, en_config: ElasticNetConfig,
                 stop: EarlyStopConfig | None = None, seed: int = 0, validation_score=None,
                 **trainer_options) -> CbmModel:
    trainer = CbmTrainer(dataset, K, en_config, seed=seed, **trainer_options)
    if stop is None or validation_score is None:
        trainer.run(trainer.max_iterations)
        return trainer.snapshot()
    return train_with_early_stopping(trainer, validation_score, stop).model
