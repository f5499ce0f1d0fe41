"""Binary model archives that store only nonzero weights.

Layout (all integers little-endian)::

    magic      8 bytes  b"MLFRARCH"
    version    u16
    manifest   u32 length + UTF-8 JSON (sorted keys, compact)
    blocks     u32 count, then per block:
                   u32 name length + UTF-8 name
                   u32 rows, u32 cols
                   per row: f64 intercept, u32 nnz, nnz x u32 index, nnz x f64 value
    checksum   u32 CRC-32 of every preceding byte

A block is a weight matrix with one intercept per row.  Linear models map to
one block each; the CRF stores its unary weights (with the bias column as
intercepts) and its pairwise table as two blocks.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from ..core import LabelVector, SupportSet
from ..estimators import BrModel, CbmModel, CrfModel, PccModel
from ..fpredict.lsf import LsfModel
from ..linreg import LinearModel

MAGIC = b"MLFRARCH"
FORMAT_VERSION = 1


class ArchiveError(ValueError):
    pass


@dataclass(frozen=True)
class ArchiveStats:
    byte_size: int
    nonzero_weight_count: int
    selected_feature_count: int
    per_model_nonzero: dict

    def mean_nonzero(self, prefix: str) -> float:
        counts = [c for name, c in self.per_model_nonzero.items() if name.startswith(prefix)]
        return float(np.mean(counts)) if counts else 0.0


@dataclass(frozen=True)
class Archive:
    model: object
    metadata: dict
    stats: ArchiveStats


def _blocks_for(model) -> tuple[dict, list[tuple[str, np.ndarray, np.ndarray]]]:
    """Split a model into manifest fields and (name, intercepts, weights) blocks."""
    if isinstance(model, BrModel):
        return {"kind": "BR"}, [(f"label/{l}", m.intercept, m.coef) for l, m in enumerate(model.models)]
    if isinstance(model, PccModel):
        return ({"kind": "PCC", "order": list(model.order)},
                [(f"chain/{j}", m.intercept, m.coef) for j, m in enumerate(model.models)])
    if isinstance(model, CbmModel):
        blocks = [("gating", model.gating.intercept, model.gating.coef)]
        for k, comp in enumerate(model.components):
            blocks += [(f"component/{k}/{l}", m.intercept, m.coef) for l, m in enumerate(comp)]
        return {"kind": "CBM", "components": model.num_components}, blocks
    if isinstance(model, CrfModel):
        sup = model.support
        meta = {
            "kind": "CRF",
            "include_pairwise": model.include_pairwise,
            "support": [list(y.labels) for y in sup.combinations],
            "support_counts": list(sup.counts),
        }
        blocks = [("unary", model.bias, model.unary),
                  ("pairwise", np.zeros(len(model.pairwise)), model.pairwise)]
        return meta, blocks
    if isinstance(model, LsfModel):
        blocks = [(f"marginal/{l}", m.intercept, m.coef) for l, m in enumerate(model.marginal_models)]
        blocks += [(f"cardinality/{l}", m.intercept, m.coef) for l, m in enumerate(model.cardinality_models)]
        blocks.append(("empty", model.empty_model.intercept, model.empty_model.coef))
        return {"kind": "LSF"}, blocks
    raise ArchiveError(f"cannot archive {type(model).__name__}")


def _model_from_blocks(meta: dict, blocks: dict):
    kind = meta.get("kind")
    lm = lambda name: LinearModel(blocks[name][1], blocks[name][0])  # noqa: E731
    if kind == "BR":
        return BrModel([lm(f"label/{l}") for l in range(len(blocks))])
    if kind == "PCC":
        return PccModel(meta["order"], [lm(f"chain/{j}") for j in range(len(meta["order"]))])
    if kind == "CBM":
        K = meta["components"]
        L = (len(blocks) - 1) // K
        return CbmModel(lm("gating"), [[lm(f"component/{k}/{l}") for l in range(L)] for k in range(K)])
    if kind == "CRF":
        bias, unary = blocks["unary"]
        L = unary.shape[0]
        support = SupportSet([LabelVector(tuple(y), L) for y in meta["support"]], meta["support_counts"], L)
        return CrfModel(unary, bias, blocks["pairwise"][1], meta["include_pairwise"], support)
    if kind == "LSF":
        L = sum(1 for n in blocks if n.startswith("marginal/"))
        n_card = sum(1 for n in blocks if n.startswith("cardinality/"))
        return LsfModel([lm(f"marginal/{l}") for l in range(L)], [lm(f"cardinality/{l}") for l in range(n_card)],
                        lm("empty"))
    raise ArchiveError(f"unknown model kind {kind!r}")


def _encode_block(name: str, intercept: np.ndarray, W: np.ndarray) -> bytes:
    W = np.asarray(W, dtype=float)
    raw = name.encode("utf-8")
    parts = [struct.pack("<I", len(raw)), raw, struct.pack("<II", *W.shape)]
    for r in range(W.shape[0]):
        nz = np.flatnonzero(W[r])
        parts.append(struct.pack("<dI", float(intercept[r]), len(nz)))
        parts.append(nz.astype("<u4").tobytes())
        parts.append(W[r, nz].astype("<f8").tobytes())
    return b"".join(parts)


def encode_model(model, metadata: dict | None = None) -> bytes:
    meta, blocks = _blocks_for(model)
    manifest = dict(metadata or {})
    manifest.update(meta)
    manifest.setdefault("library_version", __version__)
    manifest["blocks"] = [name for name, _, _ in blocks]
    manifest_raw = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = [MAGIC, struct.pack("<H", FORMAT_VERSION), struct.pack("<I", len(manifest_raw)), manifest_raw,
            struct.pack("<I", len(blocks))]
    body += [_encode_block(*b) for b in blocks]
    payload = b"".join(body)
    return payload + struct.pack("<I", zlib.crc32(payload))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ArchiveError("archive is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_model(data: bytes) -> tuple[object, dict]:
    if len(data) < len(MAGIC) + 6 or data[: len(MAGIC)] != MAGIC:
        raise ArchiveError("not a model archive")
    payload, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) != crc:
        raise ArchiveError("checksum mismatch: archive is corrupted")
    rd = _Reader(payload)
    rd.take(len(MAGIC))
    (version,) = rd.unpack("<H")
    if version != FORMAT_VERSION:
        raise ArchiveError(f"unsupported archive version {version} (expected {FORMAT_VERSION})")
    (mlen,) = rd.unpack("<I")
    manifest = json.loads(rd.take(mlen).decode("utf-8"))
    (count,) = rd.unpack("<I")
    blocks = {}
    for _ in range(count):
        (nlen,) = rd.unpack("<I")
        name = rd.take(nlen).decode("utf-8")
        rows, cols = rd.unpack("<II")
        intercept = np.zeros(rows)
        W = np.zeros((rows, cols))
        for r in range(rows):
            intercept[r], nnz = rd.unpack("<dI")
            idx = np.frombuffer(rd.take(4 * nnz), dtype="<u4")
            W[r, idx] = np.frombuffer(rd.take(8 * nnz), dtype="<f8")
        blocks[name] = (intercept, W)
    if rd.pos != len(payload):
        raise ArchiveError("trailing bytes after the last block")
    return _model_from_blocks(manifest, blocks), manifest


def archive_stats(model, byte_size: int) -> ArchiveStats:
    _, blocks = _blocks_for(model)
    D = model.num_features
    per_model = {}
    selected = set()
    for name, _, W in blocks:
        W = np.asarray(W)
        per_model[name] = int(np.count_nonzero(W))
        if name == "pairwise":
            continue
        # only text features count toward the selected-feature union (PCC label inputs excluded)
        selected.update(int(j) for j in np.flatnonzero(np.any(W[:, :D] != 0, axis=0)))
    return ArchiveStats(byte_size, sum(per_model.values()), len(selected), per_model)


def save_model(model, path, metadata: dict | None = None) -> ArchiveStats:
    data = encode_model(model, metadata)
    Path(path).write_bytes(data)
    return archive_stats(model, len(data))


def load_archive(path) -> Archive:
    data = Path(path).read_bytes()
    model, manifest = decode_model(data)
    return Archive(model, manifest, archive_stats(model, len(data)))


def load_model(path):
    return load_archive(path).model
