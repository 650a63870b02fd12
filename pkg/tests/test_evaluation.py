import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hire.data import RatingGraph, make_split
from hire.evaluation import (EvalReport, EvaluationError, PopularityPredictor, cold_users, default_threshold,
                             eval_context, evaluate, format_csv, format_table, oracle_predictor, popularity_baseline,
                             rank_metrics, rank_order)
from hire.synthetic import synthetic_graph

from metric_oracle import reference


def as_tuple(res):
    return res.precision, res.ndcg, res.map


class TestRankMetrics:
    def test_perfect_ranking(self):
        res = rank_metrics([5, 4, 1], [0.9, 0.5, 0.1], 3, 4)
        assert as_tuple(res) == (2 / 3, 1.0, 1.0)

    def test_worked_example(self):
        # order by score: items 2, 0, 1 -> ratings 1, 5, 4
        res = rank_metrics([5, 4, 1], [0.5, 0.2, 0.9], 2, 4)
        assert res.precision == 0.5
        assert res.map == pytest.approx((1 / 2) / 2)
        ideal = 5 + 4 / math.log2(3)
        assert res.ndcg == pytest.approx((1 + 5 / math.log2(3)) / ideal)

    def test_nothing_relevant(self):
        res = rank_metrics([1, 2, 3], [3, 2, 1], 2, 4)
        assert res.precision == 0.0 and res.map == 0.0

    def test_zero_gains_give_zero_ndcg(self):
        assert rank_metrics([0, 0], [1, 2], 2, 4).ndcg == 0.0

    def test_truncation_flag(self):
        res = rank_metrics([5, 1], [1, 0], 5, 4)
        assert res.truncated and res.precision == 0.5
        assert not rank_metrics([5, 1], [1, 0], 2, 4).truncated

    def test_ties_break_by_ascending_id(self):
        assert rank_order([1.0, 1.0, 2.0], ids=[9, 3, 5]) == [2, 1, 0]

    @pytest.mark.parametrize("bad", [dict(true_ratings=[], pred_scores=[]),
                                     dict(true_ratings=[1], pred_scores=[1, 2]),
                                     dict(true_ratings=[1], pred_scores=[1], k=0)])
    def test_rejects_bad_input(self, bad):
        kwargs = dict(k=1, threshold=4) | bad
        with pytest.raises(EvaluationError):
            rank_metrics(**kwargs)

    def test_default_threshold(self):
        assert default_threshold(5) == 4
        assert default_threshold(10) == 8


def random_instance(rng):
    n = int(rng.integers(1, 9))
    truth = rng.integers(1, 6, n).tolist()
    # coarse scores so ties happen often
    scores = (rng.integers(0, 4, n) / 2).tolist()
    ids = rng.permutation(20)[:n].tolist()
    return truth, scores, ids, int(rng.integers(1, 11))


def test_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        truth, scores, ids, k = random_instance(rng)
        assert as_tuple(rank_metrics(truth, scores, k, 4, ids)) == reference(truth, scores, k, 4, ids)


def test_matches_brute_force_on_all_permutations():
    truth = [5, 2, 4, 1]
    for perm in itertools.permutations(range(4)):
        scores = [float(p) for p in perm]
        for k in (1, 2, 3, 4, 6):
            assert as_tuple(rank_metrics(truth, scores, k, 4)) == reference(truth, scores, k, 4)


@given(st.lists(st.integers(1, 5), min_size=1, max_size=8), st.integers(1, 10), st.data())
def test_metric_ranges_and_relabel_invariance(truth, k, data):
    n = len(truth)
    scores = data.draw(st.lists(st.floats(-5, 5), min_size=n, max_size=n))
    res = rank_metrics(truth, scores, k, 4)
    for v in as_tuple(res):
        assert 0.0 <= v <= 1.0 + 1e-12
    # moving items around together with their ids changes nothing
    perm = data.draw(st.permutations(range(n)))
    moved = rank_metrics([truth[j] for j in perm], [scores[j] for j in perm], k, 4, ids=list(perm))
    assert as_tuple(moved) == as_tuple(res)


# ---------------------------------------------------------------- predictors


def test_popularity_is_normalised_degree():
    ratings = {(0, 0): 5.0, (1, 0): 4.0, (0, 1): 3.0, (1, 1): 2.0, (2, 1): 1.0, (3, 1): 1.0}
    g = RatingGraph(list("abcd"), list("xy"), np.zeros((4, 1), int), np.zeros((2, 1), int), (1,), (1,), ratings, 5)
    np.testing.assert_array_equal(popularity_baseline(g), [0.5, 1.0])


@pytest.fixture(scope="module")
def world():
    g = synthetic_graph(80, 60, density=0.15, seed=3)
    return g, make_split(g, "uc", seed=1)


def test_cold_users_only_lists_cold_targets(world):
    g, split = world
    users = cold_users(split)
    assert users and set(users) <= split.test_users
    for u, items in users.items():
        assert all((u, i) in split.evaluation for i in items)


def test_eval_context_masks(world):
    g, split = world
    u, items = next(iter(cold_users(split).items()))
    ctx = eval_context(g, split, split.visible_graph(g), u, items, 8, 8, 0.1, np.random.default_rng(0))
    assert ctx.eval_mask.any()
    assert not (ctx.eval_mask & ctx.support_mask).any()
    assert (ctx.eval_mask <= ctx.query_mask).all()
    for a, b in zip(*np.nonzero(ctx.eval_mask)):
        key = (int(ctx.user_ids[a]), int(ctx.item_ids[b]))
        assert key in split.evaluation and split.is_cold(*key)
    for a, b in zip(*np.nonzero(ctx.support_mask)):
        assert (int(ctx.user_ids[a]), int(ctx.item_ids[b])) not in split.evaluation


def test_oracle_predictor_is_perfect(world):
    g, split = world
    rep = evaluate(oracle_predictor, g, split, n_contexts=10, n=8, m=8)
    assert all(rep.value("ndcg", k) == pytest.approx(1.0) for k in rep.k_list)


def test_evaluation_is_reproducible_and_shared_across_methods(world):
    g, split = world
    pop = PopularityPredictor(g)
    a = evaluate(pop, g, split, n_contexts=12, n=8, m=8, seed=4)
    b = evaluate(pop, g, split, n_contexts=12, n=8, m=8, seed=4, workers=3)
    assert a.mean == b.mean and a.n_contexts == 12
    c = evaluate(pop, g, split, n_contexts=12, n=8, m=8, seed=5)
    assert c.mean != a.mean


def test_wrong_prediction_shape_is_reported(world):
    g, split = world
    with pytest.raises(EvaluationError, match="expected"):
        evaluate(lambda ctx: np.zeros(3), g, split, n_contexts=2, n=4, m=4)


def test_scenario_without_cold_ratings():
    g = synthetic_graph(20, 20, seed=0)
    split = make_split(g, "uc", seed=0)
    empty = type(split)(**{**split.__dict__, "evaluation": frozenset()})
    with pytest.raises(EvaluationError, match="no cold"):
        evaluate(PopularityPredictor(g), g, empty, n_contexts=2)


def test_report_formats(world):
    g, split = world
    rep = evaluate(PopularityPredictor(g), g, split, n_contexts=3, n=6, m=6)
    table = format_table([rep])
    assert "NDCG@5" in table and "Popularity" in table
    lines = format_csv([rep]).splitlines()
    header = lines[0].split(",")
    assert len(header) == 3 + 9 + 9
    assert header[3:12] == ["Pre.@5", "NDCG@5", "MAP@5", "Pre.@7", "NDCG@7", "MAP@7", "Pre.@10", "NDCG@10", "MAP@10"]
    assert len(lines) == 2
