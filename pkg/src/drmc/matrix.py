"""Joint feature/label matrix, block geometry and observation masks.

Rows of the joint matrix are items (training items first, then testing
items); columns are ``[features | labels]`` for DRMC-b and
``[ones | features | labels]`` for DRMC-1.  Binary data is stored as {0, 1}
and consumed by the cost functions as {-1, +1}.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, SizingError

#: Default ceiling for the dense joint matrix, in bytes.
DEFAULT_MEMORY_BUDGET = 4 * 1024**3


class Variant(str, enum.Enum):
    DRMC_B = "drmcb"
    DRMC_1 = "drmc1"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "").replace("_", "")
        for member in cls:
            if member.value == key:
                return member
        raise ConfigError(f"unknown variant {value!r}; expected drmcb or drmc1")


class InitPolicy(str, enum.Enum):
    SIGNED = "signed"  # signed targets at observed cells, 0 elsewhere
    ZEROS = "zeros"


def sign_encode(bit):
    """Map 0 -> -1 and 1 -> +1 (scalars or arrays)."""
    arr = np.asarray(bit)
    if not np.all((arr == 0) | (arr == 1)):
        raise ConfigError("sign_encode expects values in {0, 1}")
    out = 2 * arr.astype(np.int8) - 1
    return int(out) if out.ndim == 0 else out


def sign_decode(value):
    arr = np.asarray(value)
    if not np.all((arr == -1) | (arr == 1)):
        raise ConfigError("sign_decode expects values in {-1, +1}")
    out = (arr > 0).astype(np.int8)
    return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Mask:
    """Duplicate-free set of observed cells with their signed targets.

    ``rows``/``cols`` index the block the mask belongs to (the feature block
    for Omega_X, the training label block for Omega_Y), not the joint matrix.
    """

    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        values = np.asarray(self.values, dtype=np.float64).ravel()
        if not (len(rows) == len(cols) == len(values)):
            raise ConfigError("mask arrays must have equal length")
        for name, arr in (("rows", rows), ("cols", cols), ("values", values)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self):
        return len(self.rows)

    @classmethod
    def empty(cls) -> "Mask":
        return cls(np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0))

    def as_dict(self) -> dict:
        return {(int(r), int(c)): int(v) for r, c, v in zip(self.rows, self.cols, self.values)}

    def validate(self, n_rows: int, n_cols: int, name: str) -> None:
        if len(self) == 0:
            return
        if self.rows.min() < 0 or self.rows.max() >= n_rows:
            raise ConfigError(f"{name} row index outside [0, {n_rows})")
        if self.cols.min() < 0 or self.cols.max() >= n_cols:
            raise ConfigError(f"{name} column index outside [0, {n_cols})")
        if not np.all(np.abs(self.values) == 1.0):
            raise ConfigError(f"{name} targets must be exactly -1 or +1")
        linear = self.rows * n_cols + self.cols
        if len(np.unique(linear)) != len(linear):
            raise ConfigError(f"{name} contains duplicate cells")

    def dense(self, shape) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(observed, target)`` dense arrays of the given block shape."""
        observed = np.zeros(shape, dtype=bool)
        target = np.zeros(shape)
        observed[self.rows, self.cols] = True
        target[self.rows, self.cols] = self.values
        return observed, target


class ZeroPolicy:
    """Which zero-valued feature cells enter Omega_X.

    ``ZeroPolicy.full()`` observes every feature cell, ``nonzeros()`` only the
    fired ones, and ``sample(f)`` the fired ones plus a seeded uniform
    fraction ``f`` of the zeros.
    """

    def __init__(self, kind: str = "full", fraction: float = 1.0):
        if kind not in ("full", "nonzeros", "sample"):
            raise ConfigError(f"unknown zero policy {kind!r}")
        if kind == "sample" and not (0.0 < fraction <= 1.0):
            raise ConfigError(f"zero sampling ratio must lie in (0, 1], got {fraction}")
        self.kind = kind
        self.fraction = float(fraction) if kind == "sample" else (1.0 if kind == "full" else 0.0)

    @classmethod
    def full(cls):
        return cls("full")

    @classmethod
    def nonzeros(cls):
        return cls("nonzeros")

    @classmethod
    def sample(cls, fraction):
        return cls("sample", fraction)

    def __repr__(self):
        return f"ZeroPolicy({self.kind!r}, {self.fraction})"


def build_masks(features, train_labels, n_train: int, zero_policy: ZeroPolicy | None = None,
                seed: int = 0) -> tuple[Mask, Mask]:
    """Observation masks for a feature matrix and training label matrix.

    Omega_Y always covers every training label cell (absent relations are
    observed as -1).  Omega_X follows ``zero_policy``.
    """
    zero_policy = zero_policy or ZeroPolicy.full()
    X = sp.csr_matrix(features)
    Y = sp.csr_matrix(train_labels)
    if Y.shape[0] != n_train:
        raise ConfigError(f"train label matrix has {Y.shape[0]} rows, expected {n_train}")

    Yd = (Y.toarray() != 0)
    yr, yc = np.divmod(np.arange(Yd.size, dtype=np.int64), Y.shape[1]) if Y.shape[1] else (
        np.empty(0, np.int64), np.empty(0, np.int64))
    mask_y = Mask(yr, yc, np.where(Yd.ravel(), 1.0, -1.0))

    Xd = (X.toarray() != 0)
    if zero_policy.kind == "full":
        linear = np.arange(Xd.size, dtype=np.int64)
    else:
        flat = Xd.ravel()
        nz = np.flatnonzero(flat)
        if zero_policy.kind == "sample":
            zeros = np.flatnonzero(~flat)
            k = int(round(zero_policy.fraction * len(zeros)))
            rng = np.random.default_rng(seed)
            picked = np.sort(rng.choice(zeros, size=k, replace=False))
            linear = np.union1d(nz, picked)
        else:
            linear = nz
    ncols = Xd.shape[1]
    if ncols:
        xr, xc = np.divmod(linear, ncols)
    else:
        xr = xc = np.empty(0, np.int64)
    mask_x = Mask(xr, xc, np.where(Xd.ravel()[linear], 1.0, -1.0))
    return mask_x, mask_y


@dataclass(frozen=True)
class ProblemInstance:
    """Immutable problem data: binary inputs plus the two observation masks."""

    n: int
    m: int
    d: int
    t: int
    features: sp.csr_matrix
    train_labels: sp.csr_matrix
    mask_x: Mask
    mask_y: Mask
    item_ids: tuple | None = None
    feature_map: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if min(self.n, self.m, self.d, self.t) < 0:
            raise ConfigError("dimensions must be non-negative")
        if self.features.shape != (self.n + self.m, self.d):
            raise ConfigError(
                f"features shape {self.features.shape} != {(self.n + self.m, self.d)}")
        if self.train_labels.shape != (self.n, self.t):
            raise ConfigError(
                f"train label shape {self.train_labels.shape} != {(self.n, self.t)}")
        self.mask_x.validate(self.n + self.m, self.d, "maskX")
        self.mask_y.validate(self.n, self.t, "maskY")

    @classmethod
    def from_arrays(cls, features, train_labels, zero_policy: ZeroPolicy | None = None,
                    seed: int = 0, item_ids=None, feature_map=None) -> "ProblemInstance":
        X = sp.csr_matrix((np.asarray(features) != 0) if not sp.issparse(features)
                          else (features != 0), dtype=np.int8)
        Y = sp.csr_matrix((np.asarray(train_labels) != 0) if not sp.issparse(train_labels)
                          else (train_labels != 0), dtype=np.int8)
        n, t = Y.shape
        rows, d = X.shape
        mask_x, mask_y = build_masks(X, Y, n, zero_policy, seed)
        return cls(n=n, m=rows - n, d=d, t=t, features=X, train_labels=Y,
                   mask_x=mask_x, mask_y=mask_y, item_ids=item_ids, feature_map=feature_map)

    @property
    def n_items(self) -> int:
        return self.n + self.m

    def with_masks(self, mask_x: Mask, mask_y: Mask) -> "ProblemInstance":
        return ProblemInstance(self.n, self.m, self.d, self.t, self.features,
                               self.train_labels, mask_x, mask_y, self.item_ids,
                               self.feature_map)

    def reorder(self, train_rows, test_rows) -> "ProblemInstance":
        """Sub-instance whose training items are ``train_rows`` and testing
        items ``test_rows`` (global item indices, order preserved).

        Label observations are kept only for rows that stay on the training
        side; feature observations follow their rows.
        """
        train_rows = np.asarray(train_rows, dtype=np.int64)
        test_rows = np.asarray(test_rows, dtype=np.int64)
        order = np.concatenate([train_rows, test_rows])
        if len(np.unique(order)) != len(order):
            raise ConfigError("reorder rows must be distinct")
        new_index = np.full(self.n_items, -1, dtype=np.int64)
        new_index[order] = np.arange(len(order))

        keep = new_index[self.mask_x.rows] >= 0
        mx = Mask(new_index[self.mask_x.rows[keep]], self.mask_x.cols[keep],
                  self.mask_x.values[keep])
        if np.any(train_rows >= self.n):
            raise ConfigError("only original training items can stay on the training side")
        new_n = len(train_rows)
        keep_y = new_index[self.mask_y.rows]
        ok = (keep_y >= 0) & (keep_y < new_n)
        my = Mask(keep_y[ok], self.mask_y.cols[ok], self.mask_y.values[ok])

        ids = None
        if self.item_ids is not None:
            ids = tuple(self.item_ids[i] for i in order)
        return ProblemInstance(
            n=new_n, m=len(test_rows), d=self.d, t=self.t,
            features=sp.csr_matrix(self.features[order]),
            train_labels=sp.csr_matrix(self.train_labels[train_rows]),
            mask_x=mx, mask_y=my, item_ids=ids, feature_map=self.feature_map,
        )


@dataclass(frozen=True)
class BlockMap:
    """Column offsets of the joint matrix blocks."""

    variant: Variant
    d: int
    t: int

    @property
    def ones_col(self) -> int | None:
        return 0 if self.variant is Variant.DRMC_1 else None

    @property
    def feature_start(self) -> int:
        return 1 if self.variant is Variant.DRMC_1 else 0

    @property
    def label_start(self) -> int:
        return self.feature_start + self.d

    @property
    def n_cols(self) -> int:
        return self.label_start + self.t

    def feature_slice(self) -> slice:
        return slice(self.feature_start, self.label_start)

    def label_slice(self) -> slice:
        return slice(self.label_start, self.n_cols)


@dataclass
class JointMatrix:
    """Dense joint matrix together with its block map."""

    values: np.ndarray
    variant: Variant
    blocks: BlockMap

    @property
    def shape(self):
        return self.values.shape


def assemble_joint(instance: ProblemInstance, variant=Variant.DRMC_B,
                   fill: InitPolicy = InitPolicy.SIGNED,
                   memory_budget: int = DEFAULT_MEMORY_BUDGET) -> JointMatrix:
    """Build the initial joint matrix Z0 for ``instance``."""
    variant = Variant.parse(variant)
    fill = InitPolicy(fill)
    blocks = BlockMap(variant, instance.d, instance.t)
    rows, cols = instance.n_items, blocks.n_cols
    if rows * cols * 8 > memory_budget:
        raise SizingError(
            f"joint matrix {rows}x{cols} needs {rows * cols * 8} bytes, "
            f"budget is {memory_budget}")
    Z = np.zeros((rows, cols))
    if fill is InitPolicy.SIGNED:
        mx, my = instance.mask_x, instance.mask_y
        Z[mx.rows, mx.cols + blocks.feature_start] = mx.values
        Z[my.rows, my.cols + blocks.label_start] = my.values
    if variant is Variant.DRMC_1:
        Z[:, 0] = 1.0
    return JointMatrix(Z, variant, blocks)
