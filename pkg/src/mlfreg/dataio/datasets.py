"""Plain-text multi-label dataset files.

Layout (UTF-8)::

    #meta N=<int> D=<int> L=<int>
    0,2<TAB>1:0.5 7:1
    <TAB>3:1.0

Each data line holds comma-separated label ids, one TAB, then space-separated
``index:value`` pairs with strictly increasing indices.  The header is
optional when reading; without it D and L are inferred as max index + 1.
Label names, when present, live in a sidecar file ``<path>.labels`` with one
name per line.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from ..core import LabelVector, MultiLabelDataset, SparseInstance

_META = re.compile(r"#meta\s+N=(\d+)\s+D=(\d+)\s+L=(\d+)\s*$")


class DatasetFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None, path=None):
        where = f"{path}:" if path else ""
        where += f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


def _format_value(v: float) -> str:
    return repr(float(v))


def serialize_dataset(ds: MultiLabelDataset) -> str:
    lines = [f"#meta N={len(ds)} D={ds.num_features} L={ds.num_labels}"]
    for x, y in zip(ds.instances, ds.labels):
        feats = " ".join(f"{j}:{_format_value(v)}" for j, v in zip(x.indices, x.values))
        lines.append(f"{','.join(map(str, y.labels))}\t{feats}")
    return "\n".join(lines) + "\n"


def parse_dataset_text(text: str, source=None) -> MultiLabelDataset:
    header = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if raw == "":
            continue
        if raw.startswith("#"):
            m = _META.match(raw)
            if m is None:
                raise DatasetFormatError(f"malformed header {raw!r}", lineno, source)
            if rows or header is not None:
                raise DatasetFormatError("header must be the first line", lineno, source)
            header = tuple(int(g) for g in m.groups())
            continue
        if raw.count("\t") != 1:
            raise DatasetFormatError("expected exactly one TAB between labels and features", lineno, source)
        label_part, feat_part = raw.split("\t")
        try:
            labels = [int(t) for t in label_part.split(",")] if label_part.strip() else []
        except ValueError:
            raise DatasetFormatError(f"bad label list {label_part!r}", lineno, source) from None
        if any(l < 0 for l in labels) or len(set(labels)) != len(labels):
            raise DatasetFormatError("label ids must be distinct nonnegative integers", lineno, source)
        indices, values = [], []
        for tok in feat_part.split():
            idx, sep, val = tok.partition(":")
            try:
                j, v = int(idx), float(val)
            except ValueError:
                raise DatasetFormatError(f"bad feature token {tok!r}", lineno, source) from None
            if not sep or j < 0 or not np.isfinite(v):
                raise DatasetFormatError(f"bad feature token {tok!r}", lineno, source)
            if indices and j <= indices[-1]:
                raise DatasetFormatError("feature indices must be strictly increasing", lineno, source)
            if v != 0.0:
                indices.append(j)
                values.append(v)
        rows.append((lineno, labels, indices, values))
    if not rows:
        raise DatasetFormatError("dataset has no instances", None, source)

    if header is not None:
        n, D, L = header
        if n != len(rows):
            raise DatasetFormatError(f"header announces N={n} but file has {len(rows)} rows", 1, source)
    else:
        D = 1 + max((r[2][-1] for r in rows if r[2]), default=0)
        L = 1 + max((max(r[1]) for r in rows if r[1]), default=0)
    instances, label_vectors = [], []
    for lineno, labels, indices, values in rows:
        if indices and indices[-1] >= D:
            raise DatasetFormatError(f"feature index {indices[-1]} >= D={D}", lineno, source)
        if labels and max(labels) >= L:
            raise DatasetFormatError(f"label id {max(labels)} >= L={L}", lineno, source)
        instances.append(SparseInstance(tuple(indices), tuple(values), D))
        label_vectors.append(LabelVector(tuple(labels), L))
    return MultiLabelDataset(instances, label_vectors, D, L)


def parse_dataset(path) -> MultiLabelDataset:
    path = Path(path)
    ds = parse_dataset_text(path.read_text(encoding="utf-8"), source=path)
    names_path = Path(str(path) + ".labels")
    if names_path.exists():
        names = tuple(names_path.read_text(encoding="utf-8").splitlines())
        if len(names) != ds.num_labels:
            raise DatasetFormatError(f"{names_path} lists {len(names)} names for L={ds.num_labels}")
        ds = MultiLabelDataset(ds.instances, ds.labels, ds.num_features, ds.num_labels, label_names=names)
    return ds


def write_dataset(ds: MultiLabelDataset, path) -> None:
    path = Path(path)
    path.write_text(serialize_dataset(ds), encoding="utf-8")
    if ds.label_names is not None:
        Path(str(path) + ".labels").write_text("".join(n + "\n" for n in ds.label_names), encoding="utf-8")


def split_train_validation(ds: MultiLabelDataset, fraction: float, seed: int = 0):
    """Seeded random split; the second part gets round(fraction * N) rows."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    n = len(ds)
    n_val = int(np.floor(fraction * n + 0.5))
    if n_val == 0 or n_val == n:
        raise ValueError(f"split of N={n} at fraction {fraction} leaves an empty part")
    perm = np.random.default_rng(seed).permutation(n)
    return ds.subset(sorted(perm[n_val:])), ds.subset(sorted(perm[:n_val]))


def read_label_lists(path, num_labels: int | None = None) -> list[LabelVector]:
    """Predictions file: one comma-separated label list per line (empty line = no labels)."""
    lists = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").split("\n")[:-1], start=1):
        try:
            lists.append([int(t) for t in raw.split(",")] if raw.strip() else [])
        except ValueError:
            raise DatasetFormatError(f"bad label list {raw!r}", lineno, path) from None
    if num_labels is None:
        num_labels = 1 + max((max(l) for l in lists if l), default=0)
    out = []
    for lineno, labels in enumerate(lists, start=1):
        try:
            out.append(LabelVector(tuple(labels), num_labels))
        except ValueError as exc:
            raise DatasetFormatError(str(exc), lineno, path) from None
    return out


def write_label_lists(labels, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for y in labels:
            fh.write(",".join(map(str, y.labels)) + "\n")
