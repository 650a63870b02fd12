"""Top-k ranking metrics, the Popularity baseline and the cold-start test runner."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import RatingGraph, ScenarioSplit
from .sampler import SAMPLERS, PredictionContext, SamplerError

METRICS = ("precision", "ndcg", "map")
LABELS = {"precision": "Pre.", "ndcg": "NDCG", "map": "MAP"}

Predictor = Callable[[PredictionContext], np.ndarray]


class EvaluationError(ValueError):
    pass


def default_threshold(r_max: int) -> int:
    """Ratings at or above this count as relevant: 4 on a 1 to 5 scale."""
    return math.ceil(0.8 * r_max)


@dataclass(frozen=True)
class RankMetrics:
    precision: float
    ndcg: float
    map: float
    truncated: bool = False


def rank_order(pred_scores: Sequence[float], ids: Sequence[int] | None = None) -> list[int]:
    """Positions sorted by descending score, ties by ascending id."""
    ids = range(len(pred_scores)) if ids is None else ids
    return sorted(range(len(pred_scores)), key=lambda j: (-float(pred_scores[j]), ids[j]))


def _dcg(values: Sequence[float]) -> float:
    total = 0.0
    for rank, r in enumerate(values, start=1):
        total += r / math.log2(1 + rank)
    return total


def rank_metrics(true_ratings: Sequence[float], pred_scores: Sequence[float], k: int,
                 threshold: float, ids: Sequence[int] | None = None) -> RankMetrics:
    """Precision, NDCG and average precision of the top ``k`` by predicted score.

    If ``k`` exceeds the list length the whole list is used and the result is
    flagged ``truncated``. Precision divides by the number of ranked items.
    Average precision is normalised by ``min(k, #relevant)`` and is 0 when no
    item is relevant; NDCG is 0 when the ideal DCG is 0.
    """
    n = len(true_ratings)
    if n == 0 or len(pred_scores) != n:
        raise EvaluationError(f"need equal, non-empty lists (got {n} ratings, {len(pred_scores)} scores)")
    if ids is not None and len(ids) != n:
        raise EvaluationError("ids must match the ratings in length")
    if k < 1:
        raise EvaluationError("k must be >= 1")
    kk = min(k, n)
    top = rank_order(pred_scores, ids)[:kk]
    truth = [float(r) for r in true_ratings]
    rel = [r >= threshold for r in truth]

    hits = 0
    ap = 0.0
    for rank, j in enumerate(top, start=1):
        if rel[j]:
            hits += 1
            ap += hits / rank
    n_rel = sum(rel)
    precision = hits / kk
    mean_ap = ap / min(kk, n_rel) if n_rel else 0.0

    ideal = _dcg(sorted(truth, reverse=True)[:kk])
    ndcg = _dcg([truth[j] for j in top]) / ideal if ideal > 0 else 0.0
    return RankMetrics(precision, ndcg, mean_ap, k > n)


# ------------------------------------------------------------------ predictors


def popularity_baseline(g: RatingGraph) -> np.ndarray:
    """Per-item score: number of ratings divided by the largest such number."""
    if g.n_items == 0:
        raise EvaluationError("popularity baseline needs at least one item")
    deg = np.array([len(g.item_users[i]) for i in range(g.n_items)], dtype=np.float64)
    top = deg.max()
    return deg / top if top > 0 else np.ones_like(deg)


class PopularityPredictor:
    name = "Popularity"

    def __init__(self, g: RatingGraph):
        self.scores = popularity_baseline(g)

    def __call__(self, ctx: PredictionContext) -> np.ndarray:
        return np.broadcast_to(self.scores[ctx.item_ids][None, :], (ctx.n, ctx.m)).copy()


def oracle_predictor(ctx: PredictionContext) -> np.ndarray:
    """Scores each cell with its true rating; an upper bound for sanity checks."""
    return np.nan_to_num(ctx.truth, nan=0.0)


class ModelPredictor:
    name = "HIRE"

    def __init__(self, model):
        self.model = model

    def __call__(self, ctx: PredictionContext) -> np.ndarray:
        return self.model.predict(ctx)


# ---------------------------------------------------------------- test contexts


def cold_users(split: ScenarioSplit, min_targets: int = 2) -> dict[int, list[int]]:
    """Users with cold-start targets, mapped to the items of those targets.

    Users with fewer than ``min_targets`` targets are dropped unless no user
    has that many.
    """
    targets: dict[int, list[int]] = {}
    for (u, i) in sorted(split.evaluation):
        if split.is_cold(u, i):
            targets.setdefault(u, []).append(i)
    rich = {u: items for u, items in targets.items() if len(items) >= min_targets}
    return rich or targets


def eval_context(g: RatingGraph, split: ScenarioSplit, visible: RatingGraph, user: int, targets: Sequence[int],
                 n: int, m: int, p_support: float, rng: np.random.Generator,
                 sampler: str = "neighborhood") -> PredictionContext:
    """One test context around a user with cold-start targets.

    Up to ``m // 2`` of the user's target items are forced in and the rest of
    the context is sampled from the visible graph. Cold targets inside the
    context are query cells counted by the metrics; observable ratings of test
    entities are support; other known ratings are support with probability
    ``p_support`` and query otherwise. Held-out ratings that are not cold
    targets stay hidden.
    """
    take = min(len(targets), max(1, m // 2))
    forced = sorted(int(x) for x in rng.choice(np.asarray(targets), size=take, replace=False))
    ctx = SAMPLERS[sampler](visible, [(user, i) for i in forced], n, m, rng)

    truth = ctx.truth.copy()
    cold = np.zeros(truth.shape, dtype=bool)
    fixed_support = np.zeros(truth.shape, dtype=bool)
    for a, u in enumerate(ctx.user_ids):
        for b, i in enumerate(ctx.item_ids):
            key = (int(u), int(i))
            if key in split.evaluation:
                if split.is_cold(*key):
                    truth[a, b] = g.ratings[key]
                    cold[a, b] = True
            elif key in split.observable:
                fixed_support[a, b] = True
    known = ~np.isnan(truth)
    free = known & ~cold & ~fixed_support
    draw = rng.random(truth.shape) < p_support
    support = fixed_support | (free & draw)
    query = cold | (free & ~draw)
    return PredictionContext(ctx.user_ids, ctx.item_ids, ctx.user_attrs, ctx.item_attrs, truth,
                             support, query, cold)


def context_metrics(ctx: PredictionContext, scores: np.ndarray, k_list: Sequence[int],
                    threshold: float) -> dict[tuple[str, int], float] | None:
    """Metrics per user over the user's evaluated cells, averaged over users."""
    rows = [a for a in range(ctx.n) if ctx.eval_mask[a].any()]
    if not rows:
        return None
    acc = {(name, k): 0.0 for k in k_list for name in METRICS}
    for a in rows:
        cols = np.flatnonzero(ctx.eval_mask[a])
        truth = ctx.truth[a, cols].tolist()
        pred = scores[a, cols].tolist()
        ids = ctx.item_ids[cols].tolist()
        for k in k_list:
            res = rank_metrics(truth, pred, k, threshold, ids)
            for name in METRICS:
                acc[(name, k)] += getattr(res, name)
    return {key: v / len(rows) for key, v in acc.items()}


@dataclass
class EvalReport:
    scenario: str
    method: str
    k_list: tuple[int, ...]
    mean: dict[tuple[str, int], float]
    std: dict[tuple[str, int], float]
    n_contexts: int
    per_context: list[dict[tuple[str, int], float]] = field(default_factory=list, repr=False)

    def columns(self) -> list[tuple[str, int]]:
        return [(name, k) for k in self.k_list for name in METRICS]

    def value(self, metric: str, k: int) -> float:
        return self.mean[(metric, k)]


def column_label(metric: str, k: int) -> str:
    return f"{LABELS[metric]}@{k}"


def format_table(reports: Sequence[EvalReport], digits: int = 4) -> str:
    """Aligned text: one row per method, metric x k columns."""
    if not reports:
        return ""
    cols = reports[0].columns()
    head = ["Scenario", "Method"] + [column_label(*c) for c in cols]
    rows = [[r.scenario.upper(), r.method] + [f"{r.mean[c]:.{digits}f}" for c in cols] for r in reports]
    widths = [max(len(x) for x in col) for col in zip(head, *rows)]
    fmt = lambda cells: "  ".join(c.ljust(w) if j < 2 else c.rjust(w) for j, (c, w) in enumerate(zip(cells, widths)))  # noqa: E731
    lines = [fmt(head), "  ".join("-" * w for w in widths)]
    lines += [fmt(r) for r in rows]
    return "\n".join(lines)


def format_csv(reports: Sequence[EvalReport]) -> str:
    """CSV with the mean per metric x k column and a matching ``_std`` column."""
    if not reports:
        return ""
    cols = reports[0].columns()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "method", "contexts"] + [column_label(*c) for c in cols]
               + [column_label(*c) + "_std" for c in cols])
    for r in reports:
        w.writerow([r.scenario, r.method, r.n_contexts] + [repr(r.mean[c]) for c in cols]
                   + [repr(r.std[c]) for c in cols])
    return buf.getvalue()


def evaluate(predictor: Predictor, g: RatingGraph, split: ScenarioSplit, k_list: Sequence[int] = (5, 7, 10),
             n_contexts: int = 50, seed: int = 0, n: int = 32, m: int = 32, p_support: float = 0.1,
             sampler: str = "neighborhood", threshold: float | None = None, workers: int = 1,
             method: str | None = None) -> EvalReport:
    """Average top-k metrics over ``n_contexts`` test contexts.

    Every context is seeded by a user holding cold-start targets (a test user,
    or for the item-cold scenario a user who rated test items); seed users are
    visited in a seeded random order and reused cyclically when there are
    fewer of them than contexts. Metrics are computed per user over the cold
    targets in the user's row. The contexts depend only on
    ``(g, split, seed)``, so different predictors see identical contexts.
    """
    targets = cold_users(split)
    owners = sorted(targets)
    if not owners:
        raise EvaluationError(f"scenario {split.scenario}: the split has no cold ratings to evaluate")
    if n_contexts < 1:
        raise EvaluationError("n_contexts must be >= 1")
    threshold = default_threshold(g.r_max) if threshold is None else threshold
    k_list = tuple(int(k) for k in k_list)
    visible = split.visible_graph(g)
    rng = np.random.default_rng(seed)
    order = [owners[j] for j in rng.permutation(len(owners))]
    contexts = []
    for c in range(n_contexts):
        try:
            u = order[c % len(order)]
            contexts.append(eval_context(g, split, visible, u, targets[u], n, m, p_support, rng, sampler))
        except SamplerError as exc:
            raise EvaluationError(str(exc)) from exc

    def score(ctx):
        s = np.asarray(predictor(ctx), dtype=np.float64)
        if s.shape != (ctx.n, ctx.m):
            raise EvaluationError(f"predictor returned {s.shape}, expected {(ctx.n, ctx.m)}")
        return context_metrics(ctx, s, k_list, threshold)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(score, contexts))
    else:
        results = [score(c) for c in contexts]
    results = [r for r in results if r is not None]
    keys = [(name, k) for k in k_list for name in METRICS]
    mean = {key: float(np.mean([r[key] for r in results])) for key in keys}
    std = {key: float(np.std([r[key] for r in results])) for key in keys}
    name = method or getattr(predictor, "name", getattr(predictor, "__name__", "predictor"))
    return EvalReport(split.scenario, name, k_list, mean, std, len(results), results)
