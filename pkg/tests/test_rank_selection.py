import numpy as np
import pytest

from drmc.errors import ConfigError, FoldError
from drmc.rank_selection import (RankCurve, RankEstimate, curves_csv, estimate_rank,
                                 fold_rank_curve, holdout_instance, kfold_split,
                                 parse_curves_csv, summarize)
from drmc.solver import SolverConfig, solve

from conftest import random_instance


def test_kfold_examples():
    folds = kfold_split(10, 5, seed=1)
    assert [len(f) for f in folds] == [2] * 5
    assert sorted(np.concatenate(folds).tolist()) == list(range(10))
    assert all(np.array_equal(a, b) for a, b in zip(folds, kfold_split(10, 5, seed=1)))
    assert sorted(len(f) for f in kfold_split(11, 5, seed=0)) == [2, 2, 2, 2, 3]


def test_kfold_errors():
    with pytest.raises(ConfigError):
        kfold_split(3, 5)
    with pytest.raises(ConfigError):
        kfold_split(10, 1)


def test_summarize_examples():
    est = summarize([16, 17, 16, 17, 18])
    assert est.mean == pytest.approx(16.8)
    assert est.std == pytest.approx(0.8366600265340756)
    assert est.chosen == 17
    same = summarize([4, 4, 4])
    assert (same.mean, same.std, same.chosen) == (4.0, 0.0, 4)


def test_summarize_half_rounds_up():
    assert summarize([2, 3]).chosen == 3


def test_best_rank_tie_goes_to_smaller():
    assert RankCurve([1, 2, 3], [0.5, 0.7, 0.7]).best_rank() == 2


def test_estimate_json_round_trip():
    est = summarize([3, 4, 3])
    assert RankEstimate.from_json(est.to_json()) == est


def test_holdout_never_leaks_labels():
    inst = random_instance(0, rows=14, n=10, d=5, t=3)
    hold = [1, 4, 7]
    sub, gold = holdout_instance(inst, hold)
    assert sub.n == 7 and sub.m == 7
    assert np.all(sub.mask_y.rows < sub.n)
    kept = np.setdiff1d(np.arange(10), hold)
    np.testing.assert_array_equal(sub.train_labels.toarray(), inst.train_labels[kept].toarray())
    np.testing.assert_array_equal(gold.dense(), inst.train_labels[hold].toarray() != 0)
    # hold-out features stay observed
    np.testing.assert_array_equal(sub.features[sub.n:sub.n + 3].toarray(),
                                  inst.features[hold].toarray())


def test_fold_curve_provenance(small_synthetic):
    inst, _, _ = small_synthetic
    cfg = SolverConfig()
    hold = kfold_split(inst.n, 5, 0)[0]
    curve = fold_rank_curve(inst, cfg, hold)
    sub, _ = holdout_instance(inst, hold)
    trace = solve(sub, cfg).trace
    assert curve.observed_ranks == trace.ranks()
    assert set(curve.ranks) <= set(trace.ranks())
    assert len(set(curve.ranks)) == len(curve.ranks)
    assert all(0 <= f <= 1 for f in curve.avg_f1)


def test_fold_curve_earliest_vs_latest(small_synthetic):
    inst, _, _ = small_synthetic
    hold = kfold_split(inst.n, 5, 0)[1]
    a = fold_rank_curve(inst, SolverConfig(), hold, keep="latest")
    b = fold_rank_curve(inst, SolverConfig(), hold, keep="earliest")
    assert a.ranks == b.ranks


def test_errata_skips_items_without_positives(caplog):
    inst = random_instance(2, rows=14, n=10, d=5, t=3, density=0.2)
    Y = inst.train_labels.toarray()
    empty = np.flatnonzero(Y.sum(axis=1) == 0)
    full = np.flatnonzero(Y.sum(axis=1) > 0)
    assert empty.size and full.size
    hold = np.concatenate([empty[:1], full[:2]])
    curve = fold_rank_curve(inst, SolverConfig(), hold, errata_filter=True)
    assert curve.ranks
    assert "skipping" in caplog.text


def test_estimate_rank_deterministic_and_threads(small_synthetic):
    inst, _, _ = small_synthetic
    cfg = SolverConfig()
    a, ca = estimate_rank(inst, cfg, k=3, seed=5)
    b, cb = estimate_rank(inst, cfg, k=3, seed=5, threads=3)
    assert a == b
    assert curves_csv(ca) == curves_csv(cb)
    assert min(a.per_fold_best) <= a.chosen <= max(a.per_fold_best)


def test_estimate_rank_fold_error():
    inst = random_instance(3, rows=10, n=6, d=4, t=2, density=0.0)
    with pytest.raises(FoldError, match="fold 0"):
        estimate_rank(inst, SolverConfig(), k=2)


def test_curves_csv_round_trip():
    curves = [RankCurve([1, 3], [0.25, 0.5]), RankCurve([2], [0.1 + 0.2])]
    back = parse_curves_csv(curves_csv(curves))
    assert [(c.ranks, c.avg_f1) for c in back] == [(c.ranks, c.avg_f1) for c in curves]
