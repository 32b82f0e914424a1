"""Dataset text format, feature filtering and result serialization.

Dataset files are line oriented::

    items <n+m> train <n> features <d> labels <t>
    I <item> <name>          (optional item names)
    F <item> <featureIdx>
    L <item> <labelIdx>

Indices are zero based.  ``L`` lines in a data file must refer to training
items (``item < n``); the gold file carries the ``L`` lines of testing items.
Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import (BoundsError, ConfigError, EmptyFeatureError, IntegrityError, ParseError,
                     VersionError)
from .inference import GoldLabels
from .matrix import BlockMap, JointMatrix, Mask, ProblemInstance, Variant, ZeroPolicy
from .solver import SolverConfig, SolveResult, SolveTrace

logger = logging.getLogger(__name__)

RESULT_MAGIC = b"DRMCRES1"


@dataclass
class DatasetManifest:
    features: str
    gold: str | None = None
    train_labels: str | None = None  # defaults to the feature file
    feature_vocab_size: int | None = None
    label_vocab_size: int | None = None
    theta: int = 1
    errata_filter: bool = False
    zero_fraction: float | None = None  # None: observe every feature cell
    seed: int = 0

    def validate(self):
        if self.theta < 1:
            raise ConfigError(f"theta must be >= 1, got {self.theta}")
        for path in (self.features, self.train_labels, self.gold):
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"dataset file not found: {path}")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        data = json.loads(path.read_text())
        for key in ("features", "train_labels", "gold"):
            if data.get(key) is not None and not os.path.isabs(data[key]):
                data[key] = str(path.parent / data[key])
        return cls(**data)

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


class _Parsed:
    def __init__(self):
        self.header = None
        self.features = []
        self.labels = []
        self.names = {}


def _parse_file(path, kinds) -> _Parsed:
    out = _Parsed()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if out.header is None:
                if (len(parts) != 8 or parts[0] != "items" or parts[2] != "train"
                        or parts[4] != "features" or parts[6] != "labels"):
                    raise ParseError("expected header 'items N train N features D labels T'",
                                     lineno)
                try:
                    items, n, d, t = (int(parts[i]) for i in (1, 3, 5, 7))
                except ValueError:
                    raise ParseError("non-integer header field", lineno) from None
                if min(items, n, d, t) < 0 or n > items:
                    raise ParseError("inconsistent header sizes", lineno)
                out.header = (items, n, d, t)
                continue
            tag = parts[0]
            if tag not in kinds:
                raise ParseError(f"unexpected record type {tag!r}", lineno)
            if tag == "I":
                if len(parts) != 3:
                    raise ParseError("expected 'I <item> <name>'", lineno)
                item = _int(parts[1], lineno)
                _bounds(item, out.header[0], "item", lineno)
                if item in out.names:
                    raise IntegrityError(f"line {lineno}: item {item} named twice")
                out.names[item] = parts[2]
                continue
            if len(parts) != 3:
                raise ParseError(f"expected '{tag} <item> <index>'", lineno)
            item, idx = _int(parts[1], lineno), _int(parts[2], lineno)
            _bounds(item, out.header[0], "item", lineno)
            if tag == "F":
                _bounds(idx, out.header[2], "feature index", lineno)
                out.features.append((item, idx))
            else:
                _bounds(idx, out.header[3], "label index", lineno)
                out.labels.append((item, idx, lineno))
    if out.header is None:
        raise ParseError(f"{path}: missing header")
    names = list(out.names.values())
    if len(set(names)) != len(names):
        raise IntegrityError(f"{path}: duplicate item ids")
    return out


def _int(text, lineno):
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"not an integer: {text!r}", lineno) from None


def _bounds(value, limit, what, lineno):
    if not (0 <= value < limit):
        raise BoundsError(f"{what} {value} outside [0, {limit})", lineno)


def _binary(pairs, shape):
    if not pairs:
        return sp.csr_matrix(shape, dtype=np.int8)
    rows, cols = np.array(pairs, dtype=np.int64).T
    mat = sp.coo_matrix((np.ones(len(rows), np.int8), (rows, cols)), shape=shape).tocsr()
    mat.data[:] = 1  # duplicate pairs collapse
    return mat


def load_dataset(manifest: DatasetManifest):
    """Read, θ-filter and (optionally) errata-filter a dataset.

    Returns ``(instance, gold)``; ``gold`` is ``None`` when the manifest has
    no gold file.
    """
    manifest.validate()
    data = _parse_file(manifest.features, kinds={"F", "L", "I"})
    items, n, d, t = data.header
    if manifest.feature_vocab_size is not None and manifest.feature_vocab_size != d:
        raise IntegrityError(f"header declares {d} features, manifest {manifest.feature_vocab_size}")
    if manifest.label_vocab_size is not None and manifest.label_vocab_size != t:
        raise IntegrityError(f"header declares {t} labels, manifest {manifest.label_vocab_size}")
    label_lines = data.labels
    if manifest.train_labels and Path(manifest.train_labels) != Path(manifest.features):
        lab = _parse_file(manifest.train_labels, kinds={"L"})
        if lab.header != data.header:
            raise IntegrityError("train-label header differs from feature header")
        label_lines = label_lines + lab.labels
    for item, _, lineno in label_lines:
        if item >= n:
            raise BoundsError(f"training label for non-training item {item}", lineno)

    gold = None
    gold_pairs = None
    if manifest.gold:
        g = _parse_file(manifest.gold, kinds={"L", "I"})
        if g.header != data.header:
            raise IntegrityError("gold header differs from feature header")
        for item, _, lineno in g.labels:
            if item < n:
                raise BoundsError(f"gold label for training item {item}", lineno)
        gold_pairs = [(item - n, idx) for item, idx, _ in g.labels]

    X = _binary(data.features, (items, d))
    Y = _binary([(i, j) for i, j, _ in label_lines], (n, t))
    names = None
    if data.names:
        names = tuple(data.names.get(i, str(i)) for i in range(items))

    if gold_pairs is not None:
        G = _binary(gold_pairs, (items - n, t))
        if manifest.errata_filter:
            keep = np.asarray(G.sum(axis=1)).ravel() > 0
            dropped = int((~keep).sum())
            if dropped:
                logger.info("errata filter drops %d test items without positives", dropped)
            rows = np.concatenate([np.arange(n), n + np.flatnonzero(keep)])
            X = sp.csr_matrix(X[rows])
            G = sp.csr_matrix(G[keep])
            if names is not None:
                names = tuple(names[i] for i in rows)
        gold = GoldLabels(G)

    policy = ZeroPolicy.full()
    if manifest.zero_fraction is not None:
        policy = (ZeroPolicy.nonzeros() if manifest.zero_fraction == 0
                  else ZeroPolicy.sample(manifest.zero_fraction))
    inst = ProblemInstance.from_arrays(X, Y, zero_policy=policy, seed=manifest.seed,
                                       item_ids=names)
    if manifest.theta > 1:
        inst = filter_features(inst, manifest.theta)
    return inst, gold


def filter_features(inst: ProblemInstance, theta: int) -> ProblemInstance:
    """Drop feature columns that fire in fewer than ``theta`` items."""
    if theta < 1:
        raise ConfigError(f"theta must be >= 1, got {theta}")
    counts = np.diff(sp.csc_matrix(inst.features).indptr)
    keep = np.flatnonzero(counts >= theta)
    if keep.size == 0 and inst.d > 0:
        raise EmptyFeatureError(f"theta={theta} removes every feature")
    if keep.size == inst.d:
        return inst
    new_col = np.full(inst.d, -1, dtype=np.int64)
    new_col[keep] = np.arange(keep.size)
    mx = inst.mask_x
    ok = new_col[mx.cols] >= 0
    mask_x = Mask(mx.rows[ok], new_col[mx.cols[ok]], mx.values[ok])
    base = inst.feature_map if inst.feature_map is not None else np.arange(inst.d)
    return ProblemInstance(
        n=inst.n, m=inst.m, d=int(keep.size), t=inst.t,
        features=sp.csr_matrix(inst.features[:, keep]), train_labels=inst.train_labels,
        mask_x=mask_x, mask_y=inst.mask_y, item_ids=inst.item_ids,
        feature_map=np.asarray(base)[keep],
    )


def write_dataset(inst: ProblemInstance, gold: GoldLabels | None, directory,
                  stem: str = "data") -> DatasetManifest:
    """Write ``<stem>.txt`` (+ ``<stem>_gold.txt``) and ``<stem>.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = f"items {inst.n_items} train {inst.n} features {inst.d} labels {inst.t}\n"
    lines = [header]
    if inst.item_ids is not None:
        lines += [f"I {i} {name}\n" for i, name in enumerate(inst.item_ids)]
    X = sp.coo_matrix(inst.features)
    for r, c in sorted(zip(X.row.tolist(), X.col.tolist())):
        lines.append(f"F {r} {c}\n")
    Y = sp.coo_matrix(inst.train_labels)
    for r, c in sorted(zip(Y.row.tolist(), Y.col.tolist())):
        lines.append(f"L {r} {c}\n")
    data_path = directory / f"{stem}.txt"
    data_path.write_text("".join(lines))
    manifest = DatasetManifest(features=data_path.name, feature_vocab_size=inst.d,
                               label_vocab_size=inst.t)
    if gold is not None:
        G = sp.coo_matrix(gold.labels)
        glines = [header] + [f"L {inst.n + r} {c}\n"
                             for r, c in sorted(zip(G.row.tolist(), G.col.tolist()))]
        gold_path = directory / f"{stem}_gold.txt"
        gold_path.write_text("".join(glines))
        manifest.gold = gold_path.name
    manifest.dump(directory / f"{stem}.json")
    return DatasetManifest.load(directory / f"{stem}.json")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_result(result: SolveResult, path) -> None:
    """Binary result file: magic, header length, JSON header, payload.

    The payload is ``Z`` (row-major little-endian float64) followed by ``b``.
    """
    Z = np.ascontiguousarray(result.Z.values, dtype="<f8")
    b = np.ascontiguousarray(result.b, dtype="<f8")
    payload = Z.tobytes() + b.tobytes()
    cfg = result.config.to_dict() if result.config is not None else None
    header = {
        "rows": Z.shape[0], "cols": Z.shape[1], "bias_len": int(b.size),
        "variant": result.Z.variant.value, "d": result.Z.blocks.d, "t": result.Z.blocks.t,
        "final_rank": result.final_rank, "config": cfg,
        "config_digest": result.config.digest() if result.config is not None else None,
        "payload_bytes": len(payload),
        "payload_digest": hashlib.sha256(payload).hexdigest(),
        "trace": result.trace.to_dict(),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(RESULT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(payload)
    os.replace(tmp, path)


def load_result(path) -> SolveResult:
    raw = Path(path).read_bytes()
    if len(raw) < len(RESULT_MAGIC) + 8 or raw[:len(RESULT_MAGIC)] != RESULT_MAGIC:
        raise VersionError(f"{path}: not a result file or unsupported version")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    start = 16 + hlen
    if start > len(raw):
        raise VersionError(f"{path}: truncated header")
    try:
        header = json.loads(raw[16:start])
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise VersionError(f"{path}: unreadable header") from exc
    payload = raw[start:]
    if len(payload) != header["payload_bytes"]:
        raise VersionError(
            f"{path}: payload has {len(payload)} bytes, header says {header['payload_bytes']} "
            "(truncated or corrupt file)")
    rows, cols, blen = header["rows"], header["cols"], header["bias_len"]
    if 8 * (rows * cols + blen) != len(payload):
        raise IntegrityError(
            f"{path}: header dims {rows}x{cols} + bias {blen} do not match "
            f"{len(payload)} payload bytes")
    if hashlib.sha256(payload).hexdigest() != header["payload_digest"]:
        raise VersionError(f"{path}: payload digest mismatch")
    cfg = None
    if header["config"] is not None:
        cfg = SolverConfig(**header["config"])
        if cfg.digest() != header["config_digest"]:
            raise VersionError(f"{path}: config digest mismatch")
    Z = np.frombuffer(payload, dtype="<f8", count=rows * cols).reshape(rows, cols).astype(np.float64)
    b = np.frombuffer(payload, dtype="<f8", offset=8 * rows * cols).astype(np.float64)
    variant = Variant.parse(header["variant"])
    blocks = BlockMap(variant, header["d"], header["t"])
    if blocks.n_cols != cols:
        raise IntegrityError(f"{path}: block map does not match {cols} columns")
    return SolveResult(JointMatrix(Z, variant, blocks), b, SolveTrace.from_dict(header["trace"]),
                       header["final_rank"], cfg)
