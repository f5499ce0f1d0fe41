"""Elastic-net regularized binary and multinomial logistic regression.

The fitted objective is

    (1/W) * sum_i  -log p_{g_i}(x_i)  +  lambda * sum_c [(1-alpha)||w_c||_2^2 + alpha||w_c||_1]

where W is the total example weight (N for unit weights).  Intercepts are
not penalized.  Binary problems are fitted with a single weight vector for
class 1 while class 0 stays at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Protocol, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp, softmax

from . import _cd
from .core import SparseInstance


class TrainingError(RuntimeError):
    """Raised when a model cannot be fitted (bad weights, non-finite objective)."""


@dataclass(frozen=True)
class ElasticNetConfig:
    lam: float = 1e-3
    alpha: float = 0.5
    max_iterations: int = 500
    convergence_tolerance: float = 1e-6

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lambda must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not self.convergence_tolerance > 0:
            raise ValueError("convergence_tolerance must be positive")

    @property
    def l1(self) -> float:
        return self.lam * self.alpha

    @property
    def l2(self) -> float:
        return self.lam * (1.0 - self.alpha)


@dataclass(frozen=True)
class EarlyStopConfig:
    evaluation_interval: int = 5
    patience: int = 3
    min_iterations: int = 0

    def __post_init__(self):
        if self.evaluation_interval < 1:
            raise ValueError("evaluation_interval must be positive")
        if self.patience < 0 or self.min_iterations < 0:
            raise ValueError("patience and min_iterations must be >= 0")


@dataclass(frozen=True)
class WeightedExample:
    instance: SparseInstance
    class_id: int
    weight: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.weight) and self.weight >= 0):
            raise ValueError("example weight must be finite and nonnegative")


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Softmax model with per-class intercepts and a dense C x D weight matrix."""

    coef: np.ndarray
    intercept: np.ndarray

    def __post_init__(self):
        coef = np.array(self.coef, dtype=float)
        intercept = np.array(self.intercept, dtype=float).reshape(-1)
        if coef.ndim != 2 or coef.shape[0] != intercept.shape[0]:
            raise ValueError("coef must be C x D with C intercepts")
        if coef.shape[0] < 1:
            raise ValueError("a linear model needs at least one class")
        if not (np.isfinite(coef).all() and np.isfinite(intercept).all()):
            raise ValueError("weights must be finite")
        coef.setflags(write=False)
        intercept.setflags(write=False)
        object.__setattr__(self, "coef", coef)
        object.__setattr__(self, "intercept", intercept)

    @classmethod
    def zeros(cls, num_classes: int, num_features: int) -> "LinearModel":
        return cls(np.zeros((num_classes, num_features)), np.zeros(num_classes))

    @property
    def num_classes(self) -> int:
        return self.coef.shape[0]

    @property
    def num_features(self) -> int:
        return self.coef.shape[1]

    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.coef))

    def decision_function(self, X) -> np.ndarray:
        X = _as_matrix(X, self.num_features)
        return np.asarray(X @ self.coef.T) + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision_function(X), axis=1)

    def predict_log_proba(self, X) -> np.ndarray:
        S = self.decision_function(X)
        return S - logsumexp(S, axis=1, keepdims=True)

    def positive_margin(self, X) -> np.ndarray:
        """Score difference s_1 - s_0 for a binary model."""
        S = self.decision_function(X)
        return S[:, 1] - S[:, 0]

    def predict(self, X) -> np.ndarray:
        # argmax picks the smallest class id on exact ties
        return np.argmax(self.decision_function(X), axis=1)

    def penalty(self, config: ElasticNetConfig) -> float:
        return config.l2 * float(np.sum(self.coef**2)) + config.l1 * float(np.abs(self.coef).sum())

    def __eq__(self, other):
        if not isinstance(other, LinearModel):
            return NotImplemented
        return np.array_equal(self.coef, other.coef) and np.array_equal(self.intercept, other.intercept)


def _as_matrix(X, num_features: int):
    if isinstance(X, SparseInstance):
        X = X.to_csr()
    if sp.issparse(X):
        if X.shape[1] != num_features:
            raise ValueError(f"dimension mismatch: model has D={num_features}, input has {X.shape[1]}")
        return X
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != num_features:
        raise ValueError(f"dimension mismatch: model has D={num_features}, input has {X.shape[1]}")
    return X


def soft_threshold(z: float, gamma: float) -> float:
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if abs(z) <= gamma:
        return 0.0
    return math.copysign(abs(z) - gamma, z)


def predict_distribution(model: LinearModel, x: SparseInstance) -> np.ndarray:
    """Class probabilities for one instance."""
    if x.dimension != model.num_features:
        raise ValueError(f"dimension mismatch: model has D={model.num_features}, instance has {x.dimension}")
    return model.predict_proba(x)[0]


def targets_from_labels(y, weights=None, num_classes: int = 2) -> np.ndarray:
    """Turn integer class ids (and optional row weights) into an N x C target-weight matrix."""
    y = np.asarray(y, dtype=np.int64)
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise ValueError("class id out of range")
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    T = np.zeros((len(y), num_classes))
    T[np.arange(len(y)), y] = w
    return T


def smooth_loss(model: LinearModel, X, T, normalizer: float | None = None) -> float:
    """Weighted mean negative log-likelihood with soft targets ``T`` (N x C)."""
    T = np.asarray(T, dtype=float)
    norm = T.sum() if normalizer is None else normalizer
    return float(-(T * model.predict_log_proba(X)).sum() / norm)


def smooth_loss_gradient(model: LinearModel, X, T, normalizer: float | None = None):
    """Gradient of :func:`smooth_loss` w.r.t. (coef, intercept)."""
    T = np.asarray(T, dtype=float)
    norm = T.sum() if normalizer is None else normalizer
    v = T.sum(axis=1)
    R = (v[:, None] * model.predict_proba(X) - T) / norm
    X = _as_matrix(X, model.num_features)
    return np.asarray((X.T @ R).T), R.sum(axis=0)


def objective(model: LinearModel, X, T, config: ElasticNetConfig, normalizer: float | None = None) -> float:
    return smooth_loss(model, X, T, normalizer) + model.penalty(config)


def kkt_violation(model: LinearModel, X, T, config: ElasticNetConfig, normalizer: float | None = None,
                  binary: bool | None = None) -> float:
    """Largest elastic-net subgradient optimality violation over all free parameters."""
    gW, gb = smooth_loss_gradient(model, X, T, normalizer)
    gW = gW + 2.0 * config.l2 * model.coef
    if binary is None:
        binary = model.num_classes == 2
    if binary:
        # class 0 is pinned at zero; differentiate w.r.t. the class-1 margin only
        gW, gb, coef = gW[1:], gb[1:], model.coef[1:]
    else:
        coef = model.coef
    viol = np.where(
        coef > 0, np.abs(gW + config.l1), np.where(coef < 0, np.abs(gW - config.l1), np.maximum(np.abs(gW) - config.l1, 0.0))
    )
    return float(max(np.max(np.abs(gb)), viol.max(initial=0.0)))


class ElasticNetTrainer:
    """Resumable coordinate-descent fit; one iteration is one full sweep over all coordinates.

    ``T`` holds per-example target weights (N x C).  ``normalizer`` divides the
    data term and defaults to the total weight.
    """

    def __init__(self, X, T, config: ElasticNetConfig, normalizer: float | None = None,
                 init: LinearModel | None = None):
        T = np.ascontiguousarray(T, dtype=float)
        if T.ndim != 2 or T.shape[1] < 2:
            raise ValueError("targets must be an N x C matrix with C >= 2")
        if not np.isfinite(T).all() or (T < 0).any():
            raise TrainingError("example weights must be finite and nonnegative")
        total = float(T.sum())
        if not total > 0:
            raise TrainingError("total example weight is zero")
        X = sp.csc_matrix(X, dtype=float)
        X.sort_indices()
        if X.shape[0] != T.shape[0]:
            raise ValueError("X and targets differ in row count")
        if not np.isfinite(X.data).all():
            raise TrainingError("feature values must be finite")
        self.X = X
        self.T = T
        self.v = T.sum(axis=1)
        self.config = config
        self.inv_norm = 1.0 / (total if normalizer is None else float(normalizer))
        self.num_classes = T.shape[1]
        self.binary = self.num_classes == 2
        D = X.shape[1]
        self.W = np.zeros((self.num_classes, D)) if init is None else np.array(init.coef, dtype=float)
        self.b = np.zeros(self.num_classes) if init is None else np.array(init.intercept, dtype=float)
        if self.W.shape != (self.num_classes, D):
            raise ValueError("initial model has the wrong shape")
        if self.binary:
            # fold class 0 into the margin so the single-vector kernel applies
            self.w = np.ascontiguousarray(self.W[1] - self.W[0])
            self.b1 = np.array([self.b[1] - self.b[0]])
            self.s = np.asarray(X @ self.w).ravel() + self.b1[0]
            self.t1 = np.ascontiguousarray(T[:, 1])
        else:
            self.S = np.ascontiguousarray(np.asarray(X @ self.W.T) + self.b)
            self.lse = logsumexp(self.S, axis=1)
        self.iteration = 0
        self.converged = False
        self.kkt = math.inf
        if not math.isfinite(self.objective()):
            raise TrainingError("initial objective is not finite")

    @property
    def max_iterations(self) -> int:
        return self.config.max_iterations

    def run(self, sweeps: int) -> int:
        sweeps = min(sweeps, self.config.max_iterations - self.iteration)
        if sweeps <= 0 or self.converged:
            return 0
        X, cfg = self.X, self.config
        if self.binary:
            done, conv, kkt = _cd.binary_sweeps(
                X.indptr, X.indices, X.data, self.t1, self.v, self.w, self.b1, self.s,
                self.inv_norm, cfg.l1, cfg.l2, sweeps, cfg.convergence_tolerance,
            )
        else:
            done, conv, kkt = _cd.multinomial_sweeps(
                X.indptr, X.indices, X.data, self.T, self.v, self.W, self.b, self.S, self.lse,
                self.inv_norm, cfg.l1, cfg.l2, sweeps, cfg.convergence_tolerance,
            )
        self.iteration += done
        self.converged = bool(conv)
        self.kkt = float(kkt)
        if not math.isfinite(self.kkt):
            raise TrainingError("objective became non-finite during training")
        return done

    def fit(self) -> LinearModel:
        self.run(self.config.max_iterations)
        return self.snapshot()

    def snapshot(self) -> LinearModel:
        if self.binary:
            W = np.zeros_like(self.W)
            W[1] = self.w
            return LinearModel(W, np.array([0.0, self.b1[0]]))
        return LinearModel(self.W.copy(), self.b.copy())

    def objective(self) -> float:
        if self.binary:
            data = float(np.sum(self.v * np.logaddexp(0.0, self.s) - self.t1 * self.s))
            pen = self.config.l2 * float(self.w @ self.w) + self.config.l1 * float(np.abs(self.w).sum())
        else:
            data = float(np.sum(self.v * self.lse - (self.T * self.S).sum(axis=1)))
            pen = self.config.l2 * float(np.sum(self.W**2)) + self.config.l1 * float(np.abs(self.W).sum())
        return data * self.inv_norm + pen


def fit_linear(X, T, config: ElasticNetConfig, normalizer: float | None = None,
               init: LinearModel | None = None) -> LinearModel:
    return ElasticNetTrainer(X, T, config, normalizer, init).fit()


def fit_binary(X, y, config: ElasticNetConfig, weights=None, **kwargs) -> LinearModel:
    """Fit p(y=1|x) from 0/1 targets (optionally soft, in [0,1]) and row weights."""
    y = np.asarray(y, dtype=float)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    T = np.column_stack([w * (1.0 - y), w * y])
    return fit_linear(X, T, config, **kwargs)


def examples_to_arrays(examples: Sequence[WeightedExample], num_classes: int):
    if not examples:
        raise TrainingError("no training examples")
    D = examples[0].instance.dimension
    rows, cols, vals = [], [], []
    for i, ex in enumerate(examples):
        if ex.instance.dimension != D:
            raise ValueError("examples have inconsistent dimensions")
        rows.extend([i] * ex.instance.nnz)
        cols.extend(ex.instance.indices)
        vals.extend(ex.instance.values)
    X = sp.csr_matrix((vals, (rows, cols)), shape=(len(examples), D))
    T = targets_from_labels([ex.class_id for ex in examples], [ex.weight for ex in examples], num_classes)
    return X, T


def train_elastic_net(examples: Sequence[WeightedExample], num_classes: int, config: ElasticNetConfig) -> LinearModel:
    X, T = examples_to_arrays(examples, num_classes)
    return fit_linear(X, T, config)


class Trainer(Protocol):
    iteration: int
    converged: bool

    @property
    def max_iterations(self) -> int: ...

    def run(self, iterations: int) -> int: ...

    def snapshot(self): ...


class EarlyStopResult(NamedTuple):
    model: object
    best_iteration: int
    history: list  # (iteration, validation score) per checkpoint
    halted_at: int


def train_with_early_stopping(trainer: Trainer, validation_score: Callable[[object], float],
                              stop: EarlyStopConfig) -> EarlyStopResult:
    """Advance ``trainer`` in chunks and keep the snapshot with the best validation score."""
    best_score, best_model, best_iter = -math.inf, None, 0
    history = []
    stale = 0
    while trainer.iteration < trainer.max_iterations and not trainer.converged:
        done = trainer.run(stop.evaluation_interval)
        if done == 0 and not trainer.converged:
            break
        if trainer.iteration < stop.min_iterations and not trainer.converged:
            continue
        model = trainer.snapshot()
        score = float(validation_score(model))
        history.append((trainer.iteration, score))
        if score > best_score:
            best_score, best_model, best_iter = score, model, trainer.iteration
            stale = 0
        else:
            stale += 1
            if stale >= stop.patience:
                break
    if best_model is None:
        best_model = trainer.snapshot()
        best_iter = trainer.iteration
        history.append((trainer.iteration, float(validation_score(best_model))))
    return EarlyStopResult(best_model, best_iter, history, trainer.iteration)

