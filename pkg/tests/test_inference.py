import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drmc import inference as inf
from drmc.errors import ConfigError, GridError
from drmc.matrix import JointMatrix, BlockMap, Variant
from drmc.solver import SolveResult, SolveTrace

from conftest import random_instance


def brute_counts(scores, gold):
    """Exhaustive oracle: sort cells by (-score, item, label), count hits by hand."""
    m, t = scores.shape
    cells = sorted(((-scores[i, j], i, j) for i in range(m) for j in range(t)))
    hits = [bool(gold[i, j]) for _, i, j in cells]
    total = sum(1 for i in range(m) for j in range(t) if gold[i, j])
    out = []
    tp = 0
    for N, h in enumerate(hits, start=1):
        tp += h
        p = tp / N
        r = tp / total
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        out.append((p, r, f))
    return cells, out


def fake_result(Z, b, variant, d, t):
    return SolveResult(JointMatrix(Z, Variant.parse(variant), BlockMap(Variant.parse(variant), d, t)),
                       np.asarray(b), SolveTrace(), 0)


def test_probabilities_from_result():
    inst = random_instance(0, rows=4, n=2, d=2, t=2)
    Z = np.zeros((4, 5))
    Z[2:, 3:] = [[0.0, 1.0], [-2.0, 40.0]]
    res = fake_result(Z, [], "drmc1", 2, 2)
    P = inf.predict_probabilities(res, inst)
    assert P[0, 0] == 0.5
    assert P[1, 1] > P[0, 1] > P[0, 0] > P[1, 0]
    res_b = fake_result(Z[:, 1:], [0.5, 0.0], "drmcb", 2, 2)
    np.testing.assert_allclose(inf.completed_label_logits(res_b, inst), Z[2:, 3:] + [0.5, 0])


def test_ranking_by_probability_equals_ranking_by_logit():
    y = np.random.default_rng(0).standard_normal((6, 4))
    a = inf.rank_predictions(y)
    b = inf.rank_predictions(1 / (1 + np.exp(-y)))
    assert a.items.tolist() == b.items.tolist() and a.labels.tolist() == b.labels.tolist()


def test_ranking_ties_lexicographic():
    r = inf.rank_predictions(np.full((2, 3), 0.5))
    assert [(i, j) for i, j, _ in r.triples()] == list(itertools.product(range(2), range(3)))


def test_ranking_2x2_matches_sort():
    P = np.array([[0.3, 0.9], [0.1, 0.6]])
    cells, _ = brute_counts(P, np.ones_like(P))
    assert [(i, j) for i, j, _ in inf.rank_predictions(P).triples()] == [(i, j) for _, i, j in cells]


def test_ranking_row_permutation_equivariance():
    rng = np.random.default_rng(1)
    P = rng.random((5, 3))
    perm = rng.permutation(5)
    a = inf.rank_predictions(P)
    b = inf.rank_predictions(P[perm])
    assert [(perm[i], j) for i, j in zip(b.items, b.labels)] == list(zip(a.items, a.labels))


def test_ranking_rejects_non_finite():
    with pytest.raises(ConfigError):
        inf.rank_predictions(np.array([[np.nan]]))


def test_precision_and_f1_examples():
    gold = inf.GoldLabels(np.array([[1, 1, 0, 0]]))
    r = inf.rank_predictions(np.array([[0.9, 0.8, 0.1, 0.0]]))
    assert inf.precision_at(r, gold, 2) == 1.0
    assert inf.precision_at(r, gold, 4) == 0.5
    assert inf.recall_at(r, gold, 4) == 1.0
    assert inf.f1_at(r, gold, 4) == pytest.approx(2 / 3)


def test_recall_needs_positives():
    gold = inf.GoldLabels(np.zeros((2, 3)))
    r = inf.rank_predictions(np.zeros((2, 3)))
    with pytest.raises(ConfigError):
        inf.recall_at(r, gold, 1)
    with pytest.raises(GridError):
        inf.precision_at(r, gold, 7)


def test_twenty_cell_toy_matches_counting_oracle():
    rng = np.random.default_rng(20)
    P = rng.random((4, 5))
    G = rng.random((4, 5)) < 0.4
    gold = inf.GoldLabels(G)
    r = inf.rank_predictions(P)
    _, oracle = brute_counts(P, G)
    for N, (p, rec, f) in enumerate(oracle, start=1):
        assert inf.precision_at(r, gold, N) == p
        assert inf.recall_at(r, gold, N) == rec
        assert inf.f1_at(r, gold, N) == f


def test_pr_curve_perfect_and_reversed():
    G = np.array([[1, 1, 0, 0, 0, 0]])
    gold = inf.GoldLabels(G)
    perfect = inf.pr_curve(inf.rank_predictions(G.astype(float)), gold)
    assert [p for _, p in perfect[:2]] == [1.0, 1.0]
    assert [p for _, p in perfect[2:]] == [2 / N for N in range(3, 7)]
    reversed_ = inf.pr_curve(inf.rank_predictions(-G.astype(float)), gold)
    assert [p for _, p in reversed_[:4]] == [0.0] * 4


def test_pr_curve_matches_pointwise_calls():
    rng = np.random.default_rng(5)
    P, G = rng.random((3, 4)), rng.random((3, 4)) < 0.5
    G[0, 0] = True
    gold, r = inf.GoldLabels(G), inf.rank_predictions(P)
    curve = inf.pr_curve(r, gold)
    for N, (rec, p) in enumerate(curve, start=1):
        assert (rec, p) == (inf.recall_at(r, gold, N), inf.precision_at(r, gold, N))
    recalls = [c[0] for c in curve]
    assert recalls == sorted(recalls) and recalls[-1] == 1.0


def test_average_f1_examples():
    rng = np.random.default_rng(30)
    P, G = rng.random((5, 6)), rng.random((5, 6)) < 0.3
    gold, r = inf.GoldLabels(G), inf.rank_predictions(P)
    naive = sum(inf.f1_at(r, gold, N) for N in range(5, 31)) / 26
    assert inf.average_f1(r, gold) == pytest.approx(naive, abs=1e-12)
    assert inf.average_f1(r, gold, [7]) == inf.f1_at(r, gold, 7)
    all_pos = inf.GoldLabels(np.ones((2, 5)))
    assert inf.average_f1(inf.rank_predictions(np.ones((2, 5))), all_pos, [10]) == 1.0


def test_average_f1_short_ranking():
    with pytest.raises(GridError):
        inf.average_f1(inf.rank_predictions(np.ones((1, 4))), inf.GoldLabels(np.ones((1, 4))))


def test_geometric_grid_bounds():
    g = inf.geometric_grid(10_000)
    assert g[0] == 5 and g[-1] == 10_000 and np.all(np.diff(g) > 0)


@settings(max_examples=200)
@given(st.floats(0, 1), st.floats(0, 1))
def test_f1_bounds(p, r):
    f = float(inf._f1(p, r))
    assert f <= 2 * min(p, r) + 1e-15
    assert min(p, r) >= f / 2 - 1e-15


def test_counting_consistency():
    rng = np.random.default_rng(9)
    P, G = rng.random((4, 4)), rng.random((4, 4)) < 0.5
    G[0, 0] = True
    gold, r = inf.GoldLabels(G), inf.rank_predictions(P)
    for N in range(1, 17):
        assert (inf.precision_at(r, gold, N) * N) % 1 == pytest.approx(0, abs=1e-9)
        assert (inf.recall_at(r, gold, N) * gold.n_positive) == pytest.approx(
            round(inf.recall_at(r, gold, N) * gold.n_positive), abs=1e-9)


def test_top_n_table_and_csv():
    P = np.arange(12, dtype=float).reshape(3, 4)
    gold = inf.GoldLabels(P > 5)
    rows = inf.top_n_table(inf.rank_predictions(P), gold, n_set=(2, 5, 100))
    assert [r[0] for r in rows] == [2, 5, 12]
    assert rows[0][1] == 1.0
    text = inf.top_n_csv(rows)
    assert text.splitlines()[0] == "N,precision,recall,f1"
    assert inf.pr_curve_csv([(0.5, 1.0)]).splitlines() == ["recall,precision", "0.5,1.0"]


def test_restrict_filter():
    gold = inf.GoldLabels(np.array([[1, 0], [0, 0], [0, 1]]), item_filter=[True, False, True])
    P, g = inf.restrict(np.arange(6.0).reshape(3, 2), gold)
    assert P.shape == (2, 2) and g.shape == (2, 2)


def test_label_prior_scores():
    inst = random_instance(0, rows=6, n=4, d=2, t=3)
    S = inf.label_prior_scores(inst)
    expected = np.asarray(inst.train_labels.sum(axis=0)).ravel() / 4
    np.testing.assert_allclose(S, np.tile(expected, (2, 1)))
