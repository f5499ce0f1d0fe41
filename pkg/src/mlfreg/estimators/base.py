from __future__ import annotations

import abc

import numpy as np
import scipy.sparse as sp

from ..core import LabelVector, SparseInstance


class UnsupportedOperation(Exception):
    pass


def as_rows(X, num_features: int):
    """Accept a SparseInstance, a sparse matrix or a dense array; return a 2-d matrix."""
    if isinstance(X, SparseInstance):
        X = X.to_csr()
    elif not sp.issparse(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != num_features:
        raise ValueError(f"dimension mismatch: model has D={num_features}, input has {X.shape[1]}")
    return X


def as_combination_matrix(Y, num_labels: int) -> np.ndarray:
    if isinstance(Y, LabelVector):
        Y = Y.to_bits()[None, :]
    elif isinstance(Y, (list, tuple)) and Y and isinstance(Y[0], LabelVector):
        Y = np.array([y.to_bits() for y in Y])
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[1] != num_labels:
        raise ValueError(f"label vectors have size {Y.shape[1]}, model has L={num_labels}")
    return Y


class JointEstimator(abc.ABC):
    """A model of p(y|x) that can score arbitrary label combinations."""

    kind: str = ""
    normalized = True

    @property
    @abc.abstractmethod
    def num_labels(self) -> int: ...

    @property
    @abc.abstractmethod
    def num_features(self) -> int: ...

    @abc.abstractmethod
    def log_joint_matrix(self, X, Y) -> np.ndarray:
        """Log p(y|x) (or the unnormalized log score) for every row of X against every row of Y."""

    def sample_matrix(self, x, size: int, rng: np.random.Generator) -> np.ndarray:
        raise UnsupportedOperation(f"{type(self).__name__} has no sampler")

    @abc.abstractmethod
    def map_matrix(self, X, **params) -> np.ndarray:
        """Native MAP predictions as a 0/1 N x L matrix."""

    def log_joint(self, x, y) -> float:
        X = as_rows(x, self.num_features)
        if X.shape[0] != 1:
            raise ValueError("log_joint expects a single instance")
        return float(self.log_joint_matrix(X, as_combination_matrix(y, self.num_labels))[0, 0])

    def sample(self, x, rng: np.random.Generator, size: int | None = None):
        bits = self.sample_matrix(as_rows(x, self.num_features), 1 if size is None else size, rng)
        labels = [LabelVector.from_bits(row) for row in bits]
        return labels[0] if size is None else labels


def log_joint(model: JointEstimator, x, y) -> float:
    return model.log_joint(x, y)


def sample(model: JointEstimator, x, rng: np.random.Generator) -> LabelVector:
    return model.sample(x, rng)


def stack_binary(models) -> tuple[np.ndarray, np.ndarray]:
    """Margin weights ``(W, b)`` for a list of binary LinearModels, so margins = X @ W.T + b."""
    W = np.array([m.coef[1] - m.coef[0] for m in models])
    b = np.array([m.intercept[1] - m.intercept[0] for m in models])
    return W, b


def matmul(X, W) -> np.ndarray:
    return np.asarray(X @ W)


class CompositeTrainer:
    """Advance several independent trainers in lock step."""

    def __init__(self, trainers, max_iterations: int):
        self.trainers = list(trainers)
        self._max = max_iterations
        self.iteration = 0

    @property
    def max_iterations(self) -> int:
        return self._max

    @property
    def converged(self) -> bool:
        return all(t.converged for t in self.trainers)

    def run(self, iterations: int) -> int:
        iterations = min(iterations, self._max - self.iteration)
        if iterations <= 0 or self.converged:
            return 0
        for t in self.trainers:
            t.run(iterations)
        self.iteration += iterations
        return iterations
