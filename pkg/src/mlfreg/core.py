"""Basic data types: sparse instances, label vectors, datasets and support sets."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class SparseInstance:
    """One document as strictly increasing ``(index, value)`` pairs in R^D."""

    indices: tuple[int, ...]
    values: tuple[float, ...]
    dimension: int

    def __post_init__(self):
        if self.dimension <= 0:
            raise ValueError("dimension must be positive")
        if len(self.indices) != len(self.values):
            raise ValueError("indices and values differ in length")
        prev = -1
        for j, v in zip(self.indices, self.values):
            if j <= prev:
                raise ValueError("feature indices must be strictly increasing")
            if j >= self.dimension:
                raise ValueError(f"feature index {j} out of range for D={self.dimension}")
            if v == 0.0:
                raise ValueError("explicit zero values are not stored")
            if not math.isfinite(v):
                raise ValueError("feature values must be finite")
            prev = j

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]], dimension: int) -> "SparseInstance":
        pairs = sorted((int(j), float(v)) for j, v in pairs if v != 0.0)
        return cls(tuple(j for j, _ in pairs), tuple(v for _, v in pairs), dimension)

    @classmethod
    def from_dense(cls, row: Sequence[float]) -> "SparseInstance":
        row = np.asarray(row, dtype=float)
        nz = np.flatnonzero(row)
        return cls(tuple(int(j) for j in nz), tuple(float(row[j]) for j in nz), len(row))

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dimension)
        out[list(self.indices)] = self.values
        return out

    def to_csr(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (np.asarray(self.values, dtype=float), np.asarray(self.indices, dtype=np.int64), [0, self.nnz]),
            shape=(1, self.dimension),
        )


@dataclass(frozen=True)
class LabelVector:
    """A label combination y in {0,1}^L, kept as a sorted tuple of label ids."""

    labels: tuple[int, ...]
    num_labels: int

    def __post_init__(self):
        if self.num_labels <= 0:
            raise ValueError("label space size must be positive")
        labels = tuple(sorted(int(l) for l in self.labels))
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate label ids")
        if labels and (labels[0] < 0 or labels[-1] >= self.num_labels):
            raise ValueError(f"label id out of range for L={self.num_labels}")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> "LabelVector":
        bits = np.asarray(bits)
        return cls(tuple(int(l) for l in np.flatnonzero(bits)), len(bits))

    @property
    def key(self) -> str:
        return ",".join(map(str, self.labels))

    def cardinality(self) -> int:
        return len(self.labels)

    def to_bits(self) -> np.ndarray:
        out = np.zeros(self.num_labels, dtype=np.int8)
        out[list(self.labels)] = 1
        return out

    def __contains__(self, label: int) -> bool:
        return label in self.labels

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)


def cardinality(y: LabelVector) -> int:
    """Number of relevant labels, ``|y| = ||y||_1``."""
    return y.cardinality()


@dataclass(frozen=True)
class MultiLabelDataset:
    instances: tuple[SparseInstance, ...]
    labels: tuple[LabelVector, ...]
    num_features: int
    num_labels: int
    label_names: tuple[str, ...] | None = None
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.instances:
            raise ValueError("dataset must contain at least one instance")
        if len(self.instances) != len(self.labels):
            raise ValueError("instances and labels differ in length")
        for x in self.instances:
            if x.dimension != self.num_features:
                raise ValueError("instance dimension does not match dataset D")
        for y in self.labels:
            if y.num_labels != self.num_labels:
                raise ValueError("label vector size does not match dataset L")

    def __len__(self) -> int:
        return len(self.instances)

    @classmethod
    def from_arrays(cls, X, Y, **kwargs) -> "MultiLabelDataset":
        """Build from a (sparse or dense) N x D matrix and a 0/1 N x L matrix."""
        X = sp.csr_matrix(X, dtype=float)
        X.eliminate_zeros()
        X.sort_indices()
        Y = np.asarray(Y)
        instances = [
            SparseInstance(
                tuple(int(j) for j in X.indices[X.indptr[i] : X.indptr[i + 1]]),
                tuple(float(v) for v in X.data[X.indptr[i] : X.indptr[i + 1]]),
                X.shape[1],
            )
            for i in range(X.shape[0])
        ]
        labels = [LabelVector.from_bits(row) for row in Y]
        return cls(instances, labels, X.shape[1], Y.shape[1], **kwargs)

    @cached_property
    def X(self) -> sp.csr_matrix:
        """Feature matrix as CSR (N x D)."""
        indptr = np.zeros(len(self) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([x.nnz for x in self.instances])
        indices = np.fromiter((j for x in self.instances for j in x.indices), dtype=np.int64, count=indptr[-1])
        data = np.fromiter((v for x in self.instances for v in x.values), dtype=float, count=indptr[-1])
        return sp.csr_matrix((data, indices, indptr), shape=(len(self), self.num_features))

    @cached_property
    def Y(self) -> np.ndarray:
        """Label matrix as 0/1 int8 (N x L)."""
        out = np.zeros((len(self), self.num_labels), dtype=np.int8)
        for i, y in enumerate(self.labels):
            out[i, list(y.labels)] = 1
        return out

    def subset(self, rows: Sequence[int]) -> "MultiLabelDataset":
        return MultiLabelDataset(
            [self.instances[i] for i in rows],
            [self.labels[i] for i in rows],
            self.num_features,
            self.num_labels,
            self.label_names,
            self.feature_names,
        )


@dataclass(frozen=True)
class SupportSet:
    """Distinct label combinations seen in training, with their counts.

    Combinations are kept in first-seen order; ``index`` maps the canonical
    key of a combination to its position.
    """

    combinations: tuple[LabelVector, ...]
    counts: tuple[int, ...]
    num_labels: int
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "combinations", tuple(self.combinations))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if len(self.combinations) != len(self.counts):
            raise ValueError("combinations and counts differ in length")
        if any(c < 1 for c in self.counts):
            raise ValueError("support counts must be >= 1")
        index = {}
        for pos, y in enumerate(self.combinations):
            if y.num_labels != self.num_labels:
                raise ValueError("combination label space mismatch")
            if y.key in index:
                raise ValueError(f"duplicate support combination {{{y.key}}}")
            index[y.key] = pos
        object.__setattr__(self, "index", index)

    @property
    def total_count(self) -> int:
        return sum(self.counts)

    def __len__(self) -> int:
        return len(self.combinations)

    def __contains__(self, y: LabelVector) -> bool:
        return y.key in self.index

    def count(self, y: LabelVector) -> int:
        pos = self.index.get(y.key)
        return 0 if pos is None else self.counts[pos]

    @cached_property
    def matrix(self) -> np.ndarray:
        """Combinations as a 0/1 float matrix (|support| x L)."""
        out = np.zeros((len(self), self.num_labels))
        for s, y in enumerate(self.combinations):
            out[s, list(y.labels)] = 1.0
        return out

    @classmethod
    def full(cls, num_labels: int) -> "SupportSet":
        """All 2^L combinations, each with count 1 (for enumeration)."""
        combos = [LabelVector.from_bits(bits) for bits in all_combinations(num_labels)]
        return cls(combos, [1] * len(combos), num_labels)


def build_support(dataset: MultiLabelDataset) -> SupportSet:
    counts = Counter()
    first = {}
    for y in dataset.labels:
        counts[y.key] += 1
        first.setdefault(y.key, y)
    combos = list(first.values())
    return SupportSet(combos, [counts[y.key] for y in combos], dataset.num_labels)


def all_combinations(num_labels: int) -> np.ndarray:
    """All 2^L label vectors as a 0/1 int8 matrix; row r is the binary expansion of r."""
    r = np.arange(2**num_labels)[:, None]
    return ((r >> np.arange(num_labels)[None, :]) & 1).astype(np.int8)
