"""Turning the completed test-label block into rankings and metrics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .errors import ConfigError, GridError

DEFAULT_TOP_N = (100, 200, 500)


@dataclass
class GoldLabels:
    """True test labels (``m x t`` binary) and an optional item filter."""

    labels: sp.csr_matrix
    item_filter: np.ndarray | None = None  # True = item kept for evaluation

    def __post_init__(self):
        self.labels = sp.csr_matrix(self.labels != 0, dtype=np.int8)
        if self.item_filter is not None:
            self.item_filter = np.asarray(self.item_filter, dtype=bool)
            if self.item_filter.shape != (self.labels.shape[0],):
                raise ConfigError("item filter length must equal the number of test items")

    @property
    def shape(self):
        return self.labels.shape

    @property
    def n_positive(self) -> int:
        return int(self.labels.nnz)

    def dense(self) -> np.ndarray:
        return self.labels.toarray().astype(bool)


class PredictionRanking(NamedTuple):
    """Parallel arrays ordered by nonincreasing score, ties by (item, label)."""

    items: np.ndarray
    labels: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return len(self.scores)

    def triples(self):
        return list(zip(self.items.tolist(), self.labels.tolist(), self.scores.tolist()))


def completed_label_logits(result, inst) -> np.ndarray:
    """Completed ``Y_test`` block, with the learned bias added for DRMC-b."""
    Z = result.Z.values
    block = Z[inst.n:, result.Z.blocks.label_slice()]
    b = np.asarray(result.b)
    if b.size:
        block = block + b[None, :]
    return block


def predict_probabilities(result, inst) -> np.ndarray:
    return expit(completed_label_logits(result, inst))


def rank_predictions(P) -> PredictionRanking:
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2:
        raise ConfigError("probability matrix must be 2-D")
    if not np.all(np.isfinite(P)):
        raise ConfigError("probability matrix contains non-finite values")
    m, t = P.shape
    items, labels = np.divmod(np.arange(m * t), t)
    scores = P.ravel()
    # lexsort: last key is primary
    order = np.lexsort((labels, items, -scores))
    return PredictionRanking(items[order], labels[order], scores[order])


def _hits(ranking: PredictionRanking, gold: GoldLabels) -> np.ndarray:
    G = gold.dense()
    if len(ranking) and (ranking.items.max() >= G.shape[0] or ranking.labels.max() >= G.shape[1]):
        raise ConfigError("ranking refers to cells outside the gold label matrix")
    return G[ranking.items, ranking.labels]


def _check_n(ranking, N):
    if not (1 <= N <= len(ranking)):
        raise GridError(f"N={N} outside [1, {len(ranking)}]")


def _positives(gold: GoldLabels) -> int:
    pos = gold.n_positive
    if pos == 0:
        raise ConfigError("gold labels have no positives; recall is undefined")
    return pos


def precision_at(ranking, gold, N: int) -> float:
    _check_n(ranking, N)
    return float(np.count_nonzero(_hits(ranking, gold)[:N])) / N


def recall_at(ranking, gold, N: int) -> float:
    _check_n(ranking, N)
    pos = _positives(gold)
    return float(np.count_nonzero(_hits(ranking, gold)[:N])) / pos


def _f1(p, r):
    denom = p + r
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(denom > 0, 2 * p * r / np.where(denom > 0, denom, 1.0), 0.0)


def f1_at(ranking, gold, N: int) -> float:
    return float(_f1(precision_at(ranking, gold, N), recall_at(ranking, gold, N)))


def metric_curves(ranking, gold):
    """Precision, recall and F1 at every N = 1..len(ranking)."""
    pos = _positives(gold)
    tp = np.cumsum(_hits(ranking, gold))
    N = np.arange(1, len(ranking) + 1)
    precision = tp / N
    recall = tp / pos
    return N, precision, recall, _f1(precision, recall)


def pr_curve(ranking, gold):
    """``[(recall, precision), ...]`` for N = 1..len(ranking)."""
    _, precision, recall, _ = metric_curves(ranking, gold)
    return list(zip(recall.tolist(), precision.tolist()))


def default_grid(size: int, start: int = 5) -> np.ndarray:
    if size < start:
        raise GridError(f"ranking of {size} cells is shorter than Top-{start}")
    return np.arange(start, size + 1)


def geometric_grid(size: int, points: int = 200, start: int = 5) -> np.ndarray:
    """Roughly log-spaced integer grid from ``start`` to ``size`` inclusive."""
    if size < start:
        raise GridError(f"ranking of {size} cells is shorter than Top-{start}")
    grid = np.unique(np.round(np.geomspace(start, size, points)).astype(int))
    return grid


def average_f1(ranking, gold, grid=None) -> float:
    """Mean F1 over the Top-N grid (default: every N from 5 to all)."""
    size = len(ranking)
    grid = default_grid(size) if grid is None else np.asarray(grid, dtype=int)
    if grid.size == 0 or grid.min() < 5 or grid.max() > size:
        raise GridError(f"grid must lie within [5, {size}]")
    _, _, _, f1 = metric_curves(ranking, gold)
    # exactly rounded sum so the value does not depend on summation order
    return math.fsum(f1[grid - 1].tolist()) / grid.size


def top_n_table(ranking, gold, n_set=DEFAULT_TOP_N, include_all=True):
    """Rows ``(N, precision, recall, f1)`` for each N that fits the ranking."""
    N, precision, recall, f1 = metric_curves(ranking, gold)
    wanted = [n for n in n_set if 1 <= n <= len(ranking)]
    if include_all and len(ranking) not in wanted:
        wanted.append(len(ranking))
    return [(n, float(precision[n - 1]), float(recall[n - 1]), float(f1[n - 1]))
            for n in wanted]


def top_n_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("N", "precision", "recall", "f1"))
    for n, p, r, f in rows:
        writer.writerow((n, repr(p), repr(r), repr(f)))
    return buf.getvalue()


def pr_curve_csv(points) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("recall", "precision"))
    for r, p in points:
        writer.writerow((repr(r), repr(p)))
    return buf.getvalue()


def restrict(P, gold: GoldLabels):
    """Apply the gold item filter (if any) to a test-block score matrix."""
    if gold.item_filter is None:
        return np.asarray(P), gold
    keep = gold.item_filter
    return np.asarray(P)[keep], GoldLabels(gold.labels[keep])


def label_prior_scores(inst, m: int | None = None) -> np.ndarray:
    """Constant-majority baseline: every test cell scored by its label's
    training frequency."""
    m = inst.m if m is None else m
    counts = np.asarray(inst.train_labels.sum(axis=0)).ravel()
    freq = counts / max(inst.n, 1)
    return np.tile(freq, (m, 1))
