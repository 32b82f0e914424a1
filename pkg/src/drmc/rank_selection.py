"""Cross-validated choice of the completion rank.

Each fold hides the labels of a slice of training items, runs the solver and
scores every admissible iterate by average F1 on the hidden labels.  The
per-fold best ranks are summarised as mean, sample standard deviation and
the rounded mean.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DrmcError, FoldError
from .inference import GoldLabels, average_f1, geometric_grid, rank_predictions
from .matrix import ProblemInstance
from .solver import Snapshot, SolverConfig, solve

logger = logging.getLogger(__name__)


@dataclass
class RankCurve:
    ranks: list = field(default_factory=list)
    avg_f1: list = field(default_factory=list)
    observed_ranks: list = field(default_factory=list)  # one entry per observer call

    def best_rank(self) -> int:
        """Rank with the highest average F1; ties go to the smaller rank."""
        if not self.ranks:
            raise ValueError("empty rank curve")
        best = max(self.avg_f1)
        return min(r for r, f in zip(self.ranks, self.avg_f1) if f == best)


@dataclass
class RankEstimate:
    per_fold_best: list
    mean: float
    std: float
    chosen: int

    def to_json(self) -> str:
        return json.dumps({"mean": self.mean, "std": self.std, "chosen": self.chosen,
                           "per_fold_best": self.per_fold_best}, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RankEstimate":
        data = json.loads(text)
        return cls(list(data["per_fold_best"]), data["mean"], data["std"], data["chosen"])


def kfold_split(n_items: int, k: int, seed: int = 0) -> list[np.ndarray]:
    """Seeded partition of ``range(n_items)`` into ``k`` near-equal folds."""
    if k < 2:
        raise ConfigError(f"need at least 2 folds, got {k}")
    if n_items < k:
        raise ConfigError(f"cannot split {n_items} items into {k} folds")
    perm = np.random.default_rng(seed).permutation(n_items)
    return [np.sort(part) for part in np.array_split(perm, k)]


def holdout_instance(inst: ProblemInstance, hold_out, include_test: bool = True):
    """Sub-instance where ``hold_out`` training items move to the unknown block.

    Hold-out items come first among the new testing rows, followed by the
    original testing items when ``include_test`` is set.  Returns the
    sub-instance and the hold-out gold labels.
    """
    hold_out = np.asarray(sorted(set(int(i) for i in hold_out)), dtype=np.int64)
    if hold_out.size == 0:
        raise ConfigError("hold-out set is empty")
    if hold_out.min() < 0 or hold_out.max() >= inst.n:
        raise ConfigError("hold-out items must be training items")
    keep = np.setdiff1d(np.arange(inst.n), hold_out)
    test_rows = hold_out
    if include_test:
        test_rows = np.concatenate([hold_out, np.arange(inst.n, inst.n_items)])
    sub = inst.reorder(keep, test_rows)
    gold = GoldLabels(inst.train_labels[hold_out])
    return sub, gold


def fold_rank_curve(inst: ProblemInstance, cfg: SolverConfig, hold_out,
                    errata_filter: bool = False, include_test: bool = True,
                    grid: str = "dense", keep: str = "latest") -> RankCurve:
    """Average F1 on the hidden labels of ``hold_out`` for every rank the
    solver visits.  When a rank is visited repeatedly the latest iterate
    scores it (``keep="earliest"``: the first one)."""
    if keep not in ("latest", "earliest"):
        raise ConfigError(f"keep must be 'latest' or 'earliest', got {keep!r}")
    hold_out = np.asarray(hold_out, dtype=np.int64)
    if errata_filter:
        positives = np.asarray(inst.train_labels[hold_out].sum(axis=1)).ravel()
        dropped = hold_out[positives == 0]
        if dropped.size:
            logger.warning("skipping %d hold-out items without positive labels", dropped.size)
        hold_out = hold_out[positives > 0]
    sub, gold = holdout_instance(inst, hold_out, include_test)
    if gold.n_positive == 0:
        raise ConfigError("hold-out items carry no positive labels")
    n_eval = len(hold_out)
    label_cols = None
    by_rank: dict[int, float] = {}
    curve = RankCurve()
    size = n_eval * inst.t
    grid_values = geometric_grid(size) if grid == "geometric" else None

    def score(snap: Snapshot):
        nonlocal label_cols
        if label_cols is None:
            start = snap.Z.shape[1] - inst.t
            label_cols = slice(start, start + inst.t)
        logits = snap.Z[sub.n:sub.n + n_eval, label_cols]
        if snap.b.size:
            logits = logits + snap.b[None, :]
        curve.observed_ranks.append(snap.rank)
        if keep == "earliest" and snap.rank in by_rank:
            return
        by_rank[snap.rank] = average_f1(rank_predictions(logits), gold, grid_values)

    solve(sub, cfg, observer=score)
    for r in sorted(by_rank):
        curve.ranks.append(r)
        curve.avg_f1.append(by_rank[r])
    return curve


def summarize(per_fold_best) -> RankEstimate:
    best = [int(r) for r in per_fold_best]
    mean = float(np.mean(best))
    std = float(np.std(best, ddof=1)) if len(best) > 1 else 0.0
    return RankEstimate(best, mean, std, int(math.floor(mean + 0.5)))


def estimate_rank(inst: ProblemInstance, cfg: SolverConfig, k: int = 5, seed: int = 0,
                  threads: int = 1, errata_filter: bool = False, include_test: bool = True,
                  grid: str = "dense", keep: str = "latest"):
    """Run k-fold CV; returns ``(RankEstimate, curves)`` with curves in fold order."""
    folds = kfold_split(inst.n, k, seed)

    def run(index):
        try:
            curve = fold_rank_curve(inst, cfg, folds[index], errata_filter, include_test, grid,
                                    keep)
        except DrmcError as exc:
            raise FoldError(index, str(exc)) from exc
        if not curve.ranks:
            raise FoldError(index, "empty rank curve")
        return curve

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            curves = list(pool.map(run, range(k)))
    else:
        curves = [run(i) for i in range(k)]
    return summarize([c.best_rank() for c in curves]), curves


def curves_csv(curves) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("fold", "rank", "avg_f1"))
    for fold, curve in enumerate(curves):
        for r, f in zip(curve.ranks, curve.avg_f1):
            writer.writerow((fold, r, repr(f)))
    return buf.getvalue()


def parse_curves_csv(text: str) -> list[RankCurve]:
    curves: dict[int, RankCurve] = {}
    for row in csv.DictReader(io.StringIO(text)):
        curve = curves.setdefault(int(row["fold"]), RankCurve())
        curve.ranks.append(int(row["rank"]))
        curve.avg_f1.append(float(row["avg_f1"]))
    return [curves[k] for k in sorted(curves)]
