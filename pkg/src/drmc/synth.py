"""Seeded synthetic instances with a planted low-rank ground truth, plus the
brute-force oracles used to cross-check the solver building blocks.

Random numbers come from ``numpy.random.Generator(PCG64(seed))``
(``numpy.random.default_rng``).  Draw order is fixed: left factor
``(n+m) x r``, right factor ``(d+t) x r`` (standard normals), then uniform
``[0, 1)`` arrays for feature noise ``(n+m) x d`` and label noise ``n x t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError
from .inference import GoldLabels
from .matrix import BlockMap, ProblemInstance, Variant, ZeroPolicy


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    m: int
    d: int
    t: int
    rank: int
    feature_noise: float = 0.0
    label_flip: float = 0.0
    seed: int = 0

    def validate(self):
        if min(self.n, self.m, self.d, self.t) < 1:
            raise ConfigError("synthetic dimensions must be positive")
        if not (1 <= self.rank <= min(self.n + self.m, self.d + self.t)):
            raise ConfigError(f"planted rank {self.rank} must lie in [1, min(n+m, d+t)]")
        for name in ("feature_noise", "label_flip"):
            rate = getattr(self, name)
            if not (0.0 <= rate < 0.5):
                raise ConfigError(f"{name} must lie in [0, 0.5), got {rate}")


#: Reference instance for the acceptance suite.
REFERENCE_SPEC = SyntheticSpec(n=80, m=40, d=60, t=10, rank=3,
                               feature_noise=0.05, label_flip=0.05, seed=42)


def generate(spec: SyntheticSpec, zero_policy: ZeroPolicy | None = None):
    """Return ``(instance, gold, ground_truth)``.

    ``ground_truth = L @ R.T`` has rank ``spec.rank``; binary data is its
    sign pattern (``> 0``).  Features (all items) and training labels are
    flipped independently at the configured rates; gold test labels are
    noiseless.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    items, cols = spec.n + spec.m, spec.d + spec.t
    left = rng.standard_normal((items, spec.rank))
    right = rng.standard_normal((cols, spec.rank))
    truth = left @ right.T
    bits = truth > 0

    feat = bits[:, :spec.d].copy()
    feat ^= rng.random((items, spec.d)) < spec.feature_noise
    train = bits[:spec.n, spec.d:].copy()
    train ^= rng.random((spec.n, spec.t)) < spec.label_flip
    gold = GoldLabels(sp.csr_matrix(bits[spec.n:, spec.d:].astype(np.int8)))

    inst = ProblemInstance.from_arrays(feat.astype(np.int8), train.astype(np.int8),
                                       zero_policy=zero_policy, seed=spec.seed)
    return inst, gold, truth


def _dense_targets(inst: ProblemInstance):
    """Observation indicators and targets laid out as dense blocks."""
    ox = np.zeros((inst.n_items, inst.d), dtype=bool)
    tx = np.zeros((inst.n_items, inst.d))
    for r, c, v in zip(inst.mask_x.rows, inst.mask_x.cols, inst.mask_x.values):
        ox[r, c] = True
        tx[r, c] = v
    oy = np.zeros((inst.n, inst.t), dtype=bool)
    ty = np.zeros((inst.n, inst.t))
    for r, c, v in zip(inst.mask_y.rows, inst.mask_y.cols, inst.mask_y.values):
        oy[r, c] = True
        ty[r, c] = v
    return ox, tx, oy, ty


def naive_smooth_objective(Z, b, inst: ProblemInstance, lam: float, variant) -> float:
    """Data-fit terms re-summed from dense blocks with exactly rounded sums."""
    blocks = BlockMap(Variant.parse(variant), inst.d, inst.t)
    ox, tx, oy, ty = _dense_targets(inst)
    return _smooth_from_dense(np.asarray(Z, float), b, blocks, ox, tx, oy, ty, lam)


def _weighted_terms(Z, b, blocks, ox, tx, oy, ty, lam):
    """Per-cell weighted costs of the feature and label blocks (dense arrays)."""
    parts = []
    nx = int(ox.sum())
    if nx:
        fx = Z[:, blocks.feature_slice()]
        parts.append(np.logaddexp(0.0, -fx[ox] * tx[ox]) / nx)
    ny = int(oy.sum())
    if ny:
        fy = Z[:oy.shape[0], blocks.label_slice()]
        if b is not None and len(b):
            fy = fy + np.asarray(b)[None, :]
        parts.append(lam * np.logaddexp(0.0, -fy[oy] * ty[oy]) / ny)
    return np.concatenate(parts) if parts else np.zeros(0)


def _smooth_from_dense(Z, b, blocks, ox, tx, oy, ty, lam):
    return math.fsum(_weighted_terms(Z, b, blocks, ox, tx, oy, ty, lam))


def fd_gradient_oracle(Z, b, inst: ProblemInstance, lam: float, h: float = 1e-6,
                       cells=None, bias_entries=None, variant=Variant.DRMC_B):
    """Central finite differences of the data-fit terms.

    ``cells`` is an iterable of ``(row, col)`` joint-matrix positions and
    ``bias_entries`` of bias indices (DRMC-b).  Returns ``(gz, gb)`` arrays
    aligned with those inputs.
    """
    if not (1e-8 <= h <= 1e-4):
        raise ConfigError("finite-difference step must lie in [1e-8, 1e-4]")
    blocks = BlockMap(Variant.parse(variant), inst.d, inst.t)
    dense = _dense_targets(inst)
    Z = np.array(Z, dtype=np.float64)
    b = None if b is None else np.array(b, dtype=np.float64)
    cells = [] if cells is None else list(cells)
    bias_entries = [] if bias_entries is None else list(bias_entries)

    def f(Zv, bv):
        return _weighted_terms(Zv, bv, blocks, *dense, lam)

    # termwise differences before the exact sum: untouched terms cancel exactly
    # instead of leaving eps/h of rounding noise from two O(1) totals

    gz = np.empty(len(cells))
    for k, (i, j) in enumerate(cells):
        orig = Z[i, j]
        Z[i, j] = orig + h
        up, hi = f(Z, b), Z[i, j]
        Z[i, j] = orig - h
        down, lo = f(Z, b), Z[i, j]
        Z[i, j] = orig
        gz[k] = math.fsum(up - down) / (hi - lo)
    gb = np.empty(len(bias_entries))
    for k, j in enumerate(bias_entries):
        orig = b[j]
        b[j] = orig + h
        up, hi = f(Z, b), b[j]
        b[j] = orig - h
        down, lo = f(Z, b), b[j]
        b[j] = orig
        gb[k] = math.fsum(up - down) / (hi - lo)
    return gz, gb


def dense_shrink_oracle(A, threshold: float) -> np.ndarray:
    """Full SVD, explicit elementwise thresholding, explicit reconstruction."""
    A = np.asarray(A, dtype=np.float64)
    U, S, Vt = np.linalg.svd(A, full_matrices=True)
    rows, cols = A.shape
    Sigma = np.zeros((rows, cols))
    for k, s in enumerate(S):
        Sigma[k, k] = s - threshold if s > threshold else 0.0
    out = np.zeros((rows, cols))
    for i in range(rows):
        for j in range(cols):
            acc = 0.0
            for k in range(min(rows, cols)):
                acc += U[i, k] * Sigma[k, k] * Vt[k, j]
            out[i, j] = acc
    return out
