"""Pairwise conditional random field with a support-restricted partition function.

score(x, y) = sum_l y_l (w_l . x + b_l) + sum_{l<m} theta_{lm}[2*y_l + y_m]

The four pairwise weights of a pair are indexed by (y_l, y_m) in the order
00, 01, 10, 11.  ``b_l`` is the weight on a constant feature appended to
every instance; like logistic-regression intercepts it is not penalized.
Training maximizes the mean conditional log-likelihood over the support minus
an L2 penalty on the unary and pairwise weights.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from ..core import LabelVector, MultiLabelDataset, SupportSet
from ..linreg import EarlyStopConfig, TrainingError, train_with_early_stopping
from .base import JointEstimator, as_rows, matmul


def label_pairs(num_labels: int) -> list[tuple[int, int]]:
    return list(itertools.combinations(range(num_labels), 2))


def pair_features(Y, num_labels: int) -> np.ndarray:
    """One-hot pair-state indicators, shape S x (P*4), for 0/1 combinations ``Y``."""
    Y = np.asarray(Y, dtype=np.int64)
    pairs = label_pairs(num_labels)
    out = np.zeros((Y.shape[0], 4 * len(pairs)))
    for p, (l, m) in enumerate(pairs):
        state = 2 * Y[:, l] + Y[:, m]
        out[np.arange(Y.shape[0]), 4 * p + state] = 1.0
    return out


@dataclass(frozen=True, eq=False)
class CrfModel(JointEstimator):
    unary: np.ndarray  # L x D
    bias: np.ndarray  # L
    pairwise: np.ndarray  # P x 4, rows follow label_pairs(L)
    include_pairwise: bool
    support: SupportSet
    kind = "CRF"
    normalized = False

    def __post_init__(self):
        L, D = np.shape(self.unary)
        for name, arr, shape in (("unary", self.unary, (L, D)), ("bias", self.bias, (L,)),
                                 ("pairwise", self.pairwise, (len(label_pairs(L)), 4))):
            arr = np.array(arr, dtype=float).reshape(shape)
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} weights must be finite")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not self.include_pairwise and np.any(self.pairwise != 0):
            raise ValueError("pairwise weights must be zero when pairwise terms are disabled")
        if self.support.num_labels != L:
            raise ValueError("support label space does not match the model")

    @property
    def num_labels(self) -> int:
        return self.unary.shape[0]

    @property
    def num_features(self) -> int:
        return self.unary.shape[1]

    def unary_scores(self, X) -> np.ndarray:
        X = as_rows(X, self.num_features)
        return matmul(X, self.unary.T) + self.bias

    def log_joint_matrix(self, X, Y) -> np.ndarray:
        """Unnormalized log scores, N x S."""
        Y = np.asarray(Y, dtype=float)
        out = self.unary_scores(X) @ Y.T
        if self.include_pairwise and self.num_labels > 1:
            out = out + pair_features(Y, self.num_labels) @ self.pairwise.ravel()
        return out

    def support_distribution(self, X, support: SupportSet | None = None) -> np.ndarray:
        support = self.support if support is None else support
        if len(support) == 0:
            raise ValueError("support must be nonempty")
        return softmax(self.log_joint_matrix(X, support.matrix), axis=1)

    def map_matrix(self, X, support: SupportSet | None = None, **params) -> np.ndarray:
        support = self.support if support is None else support
        scores = self.log_joint_matrix(X, support.matrix)
        return support.matrix[np.argmax(scores, axis=1)].astype(np.int8)


def crf_support_distribution(model: CrfModel, x, support: SupportSet | None = None) -> np.ndarray:
    return model.support_distribution(x, support)[0]


class CrfObjective:
    """Negative penalized mean log-likelihood and its gradient over a flat parameter vector."""

    def __init__(self, X, Y, support: SupportSet, include_pairwise: bool, l2_lambda: float):
        self.X = X.tocsr()
        self.Y = np.asarray(Y, dtype=float)
        self.N, self.D = X.shape
        self.L = self.Y.shape[1]
        self.support = support
        self.S = support.matrix
        self.include_pairwise = include_pairwise and self.L > 1
        self.l2 = l2_lambda
        self.P = len(label_pairs(self.L))
        if any(LabelVector.from_bits(row) not in support for row in self.Y):
            raise ValueError("every training label vector must belong to the support")
        if self.include_pairwise:
            self.phi_support = pair_features(self.S, self.L)
            self.phi_mean = pair_features(self.Y, self.L).mean(axis=0)
        self.size = self.L * self.D + self.L + (4 * self.P if self.include_pairwise else 0)

    def unpack(self, theta):
        LD = self.L * self.D
        W = theta[:LD].reshape(self.L, self.D)
        b = theta[LD : LD + self.L]
        pw = theta[LD + self.L :].reshape(self.P, 4) if self.include_pairwise else np.zeros((self.P, 4))
        return W, b, pw

    def __call__(self, theta):
        W, b, pw = self.unpack(theta)
        U = matmul(self.X, W.T) + b  # N x L
        scores = U @ self.S.T
        if self.include_pairwise:
            scores = scores + self.phi_support @ pw.ravel()
        log_z = logsumexp(scores, axis=1)
        observed = (U * self.Y).sum(axis=1)
        Pr = np.exp(scores - log_z[:, None])
        ll = observed.sum() - log_z.sum()
        R = self.Y - Pr @ self.S  # N x L, observed minus expected label indicators
        gW = np.asarray((self.X.T @ R).T) / self.N
        gb = R.mean(axis=0)
        parts_value = -ll / self.N + self.l2 * float(np.sum(W**2))
        grads = [-gW.ravel() + 2 * self.l2 * W.ravel(), -gb]
        if self.include_pairwise:
            pair_obs = self.phi_mean @ pw.ravel()
            parts_value += -pair_obs + self.l2 * float(np.sum(pw**2))
            g_pair = self.phi_mean - (Pr @ self.phi_support).mean(axis=0)
            grads.append(-g_pair + 2 * self.l2 * pw.ravel())
        return float(parts_value), np.concatenate(grads)


class CrfTrainer:
    """Full-batch L-BFGS with a backtracking (Armijo) line search; resumable."""

    def __init__(self, dataset: MultiLabelDataset, support: SupportSet, include_pairwise: bool = True,
                 l2_lambda: float = 1e-3, max_iterations: int = 500, tolerance: float = 1e-6, memory: int = 10):
        self.fun = CrfObjective(dataset.X, dataset.Y, support, include_pairwise, l2_lambda)
        self.support = support
        self.include_pairwise = include_pairwise
        self.theta = np.zeros(self.fun.size)
        self.value, self.grad = self.fun(self.theta)
        if not math.isfinite(self.value):
            raise TrainingError("initial CRF objective is not finite")
        self._max = max_iterations
        self.tolerance = tolerance
        self.history: deque = deque(maxlen=memory)
        self.iteration = 0
        self.converged = np.max(np.abs(self.grad)) <= tolerance
        self.trace = [self.value]

    @property
    def max_iterations(self) -> int:
        return self._max

    def _direction(self):
        q = -self.grad.copy()
        alphas = []
        for s, y, rho in reversed(self.history):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if self.history:
            s, y, _ = self.history[-1]
            q *= (s @ y) / (y @ y)
        for (s, y, rho), a in zip(self.history, reversed(alphas)):
            q += s * (a - rho * (y @ q))
        return q

    def run(self, iterations: int) -> int:
        done = 0
        while done < iterations and self.iteration < self._max and not self.converged:
            d = self._direction()
            slope = float(self.grad @ d)
            if slope >= 0:  # lost descent; restart from steepest descent
                self.history.clear()
                d = -self.grad
                slope = float(self.grad @ d)
            step = 1.0 if self.history else min(1.0, 1.0 / max(np.max(np.abs(self.grad)), 1e-12))
            for _ in range(30):
                theta = self.theta + step * d
                value, grad = self.fun(theta)
                if math.isfinite(value) and value <= self.value + 1e-4 * step * slope:
                    break
                step *= 0.5
            else:
                if not math.isfinite(value):
                    raise TrainingError("CRF objective stayed non-finite after 30 step halvings")
                self.converged = True  # no further decrease attainable at machine precision
                break
            s, y = theta - self.theta, grad - self.grad
            if s @ y > 1e-12:
                self.history.append((s, y, 1.0 / (s @ y)))
            self.theta, self.value, self.grad = theta, value, grad
            self.iteration += 1
            done += 1
            self.trace.append(value)
            if np.max(np.abs(grad)) <= self.tolerance:
                self.converged = True
        return done

    def snapshot(self) -> CrfModel:
        W, b, pw = self.fun.unpack(self.theta)
        return CrfModel(W.copy(), b.copy(), pw.copy(), self.include_pairwise, self.support)


def crf_train(dataset: MultiLabelDataset, support: SupportSet, include_pairwise: bool = True,
              l2_lambda: float = 1e-3, stop: EarlyStopConfig | None = None, validation_score=None,
              **trainer_options) -> CrfModel:
    trainer = CrfTrainer(dataset, support, include_pairwise, l2_lambda, **trainer_options)
    if stop is None or validation_score is None:
        trainer.run(trainer.max_iterations)
        return trainer.snapshot()
    return train_with_early_stopping(trainer, validation_score, stop).model
