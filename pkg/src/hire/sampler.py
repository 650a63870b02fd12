"""Prediction-context construction.

A context is a block of ``n`` users by ``m`` items taken from a rating graph.
Three samplers are provided: hop-by-hop neighbourhood expansion (the default),
uniform random, and attribute cosine similarity.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .data import RatingGraph

OBSERVED, MASKED, UNOBSERVED = 0, 1, 2


class SamplerError(ValueError):
    pass


@dataclass
class PredictionContext:
    """Sampled users x items with ground truth and support/query masks.

    ``truth`` is NaN where no rating is known. ``support_mask`` cells are shown
    to the model; ``query_mask`` cells are hidden and predicted.
    ``eval_mask`` marks the query cells that count for ranking metrics (the
    cold-start targets); it is empty for training contexts.
    """

    user_ids: np.ndarray
    item_ids: np.ndarray
    user_attrs: np.ndarray
    item_attrs: np.ndarray
    truth: np.ndarray
    support_mask: np.ndarray
    query_mask: np.ndarray
    eval_mask: np.ndarray | None = None

    def __post_init__(self):
        n, m = len(self.user_ids), len(self.item_ids)
        for name in ("truth", "support_mask", "query_mask"):
            if getattr(self, name).shape != (n, m):
                raise SamplerError(f"{name} must be {n}x{m}, got {getattr(self, name).shape}")
        if self.eval_mask is None:
            self.eval_mask = np.zeros((n, m), dtype=bool)
        if (self.support_mask & self.query_mask).any():
            raise SamplerError("support and query masks overlap")
        known = ~np.isnan(self.truth)
        if ((self.support_mask | self.query_mask) & ~known).any():
            raise SamplerError("mask covers a cell without ground truth")

    @property
    def n(self) -> int:
        return len(self.user_ids)

    @property
    def m(self) -> int:
        return len(self.item_ids)

    @property
    def rating_state(self) -> np.ndarray:
        """OBSERVED on support cells, MASKED on query cells, UNOBSERVED elsewhere."""
        state = np.full((self.n, self.m), UNOBSERVED, dtype=np.int8)
        state[self.support_mask] = OBSERVED
        state[self.query_mask] = MASKED
        return state

    def permuted(self, user_perm: Sequence[int], item_perm: Sequence[int]) -> "PredictionContext":
        """Reorder users and items; row k of the result is row user_perm[k]."""
        up = np.asarray(user_perm)
        ip = np.asarray(item_perm)
        return PredictionContext(
            self.user_ids[up], self.item_ids[ip], self.user_attrs[up], self.item_attrs[ip],
            self.truth[np.ix_(up, ip)], self.support_mask[np.ix_(up, ip)],
            self.query_mask[np.ix_(up, ip)], self.eval_mask[np.ix_(up, ip)],
        )


def context_from(g: RatingGraph, users: Sequence[int], items: Sequence[int]) -> PredictionContext:
    """Context over the given entities; every known rating starts as support."""
    users = np.asarray(list(users), dtype=np.int64)
    items = np.asarray(list(items), dtype=np.int64)
    truth = np.full((len(users), len(items)), np.nan)
    col = {int(i): j for j, i in enumerate(items)}
    for k, u in enumerate(users):
        for i in g.user_items[int(u)]:
            j = col.get(i)
            if j is not None:
                truth[k, j] = g.ratings[(int(u), i)]
    known = ~np.isnan(truth)
    return PredictionContext(users, items, g.user_attrs[users], g.item_attrs[items], truth,
                             known.copy(), np.zeros_like(known))


def _seed_sets(seeds, n: int, m: int) -> tuple[list[int], list[int]]:
    if not seeds:
        raise SamplerError("at least one seed pair is required")
    users: list[int] = []
    items: list[int] = []
    for u, i in seeds:
        if u is not None and u not in users:
            users.append(int(u))
        if i is not None and i not in items:
            items.append(int(i))
    if len(users) > n or len(items) > m:
        raise SamplerError(f"seeds need {len(users)}x{len(items)} but budget is {n}x{m}")
    return users, items


def _take(candidates: list[int], budget: int, rng: np.random.Generator) -> list[int]:
    if budget <= 0:
        return []
    if len(candidates) <= budget:
        return candidates
    picked = rng.choice(len(candidates), size=budget, replace=False)
    return [candidates[k] for k in picked]


def _fill_uniform(chosen: list[int], population: int, budget: int, rng: np.random.Generator) -> None:
    need = budget - len(chosen)
    if need <= 0:
        return
    taken = set(chosen)
    rest = [x for x in range(population) if x not in taken]
    chosen.extend(_take(rest, need, rng))


def sample_neighborhood(g: RatingGraph, seeds, n: int, m: int, rng: np.random.Generator) -> PredictionContext:
    """Expand the seed set one hop at a time over the bipartite graph.

    Each hop gathers the unseen neighbours of the previous hop's entities.
    If they fit the remaining budget they are all taken, otherwise a uniform
    subset is. When the reachable component is exhausted before the budget,
    the rest is filled uniformly from the whole graph.
    """
    if g.n_users == 0 or g.n_items == 0:
        raise SamplerError("cannot sample from an empty graph")
    users, items = _seed_sets(seeds, n, m)
    n = min(n, g.n_users)
    m = min(m, g.n_items)
    in_users, in_items = set(users), set(items)
    frontier_u, frontier_i = list(users), list(items)
    while (len(users) < n or len(items) < m) and (frontier_u or frontier_i):
        cand_i = sorted({i for u in frontier_u for i in g.user_items[u]} - in_items)
        cand_u = sorted({u for i in frontier_i for u in g.item_users[i]} - in_users)
        new_u = _take(cand_u, n - len(users), rng)
        new_i = _take(cand_i, m - len(items), rng)
        users.extend(new_u)
        items.extend(new_i)
        in_users.update(new_u)
        in_items.update(new_i)
        frontier_u, frontier_i = new_u, new_i
    _fill_uniform(users, g.n_users, n, rng)
    _fill_uniform(items, g.n_items, m, rng)
    return context_from(g, users, items)


def sample_random(g: RatingGraph, seeds, n: int, m: int, rng: np.random.Generator) -> PredictionContext:
    """Seeds plus entities drawn uniformly without replacement."""
    if g.n_users == 0 or g.n_items == 0:
        raise SamplerError("cannot sample from an empty graph")
    users, items = _seed_sets(seeds, n, m)
    _fill_uniform(users, g.n_users, min(n, g.n_users), rng)
    _fill_uniform(items, g.n_items, min(m, g.n_items), rng)
    return context_from(g, users, items)


def _by_similarity(attrs: np.ndarray, seeds: list[int], budget: int) -> list[int]:
    if budget <= 0 or not seeds:
        return []
    h = attrs.shape[1]
    # cosine of concatenated one-hot slots = fraction of matching slots
    matches = (attrs[:, None, :] == attrs[seeds][None, :, :]).sum(axis=2).max(axis=1) / max(h, 1)
    order = np.lexsort((np.arange(len(attrs)), -matches))
    taken = set(seeds)
    return [int(x) for x in order if int(x) not in taken][:budget]


def sample_featsim(g: RatingGraph, seeds, n: int, m: int, rng: np.random.Generator) -> PredictionContext:
    """Seeds plus the entities whose attributes are most cosine-similar to them.

    Ties go to the lower entity index. A side without seeds falls back to a
    uniform draw.
    """
    if g.n_users == 0 or g.n_items == 0:
        raise SamplerError("cannot sample from an empty graph")
    users, items = _seed_sets(seeds, n, m)
    n = min(n, g.n_users)
    m = min(m, g.n_items)
    users.extend(_by_similarity(g.user_attrs, users, n - len(users)))
    items.extend(_by_similarity(g.item_attrs, items, m - len(items)))
    _fill_uniform(users, g.n_users, n, rng)
    _fill_uniform(items, g.n_items, m, rng)
    return context_from(g, users, items)


SAMPLERS = {
    "neighborhood": sample_neighborhood,
    "random": sample_random,
    "featsim": sample_featsim,
}


def assign_masks(ctx: PredictionContext, p_support: float, rng: np.random.Generator) -> PredictionContext:
    """Split every cell with ground truth into support (prob. ``p_support``) or query."""
    if not 0.0 <= p_support <= 1.0:
        raise SamplerError(f"p_support must be in [0, 1], got {p_support}")
    known = ~np.isnan(ctx.truth)
    draw = rng.random(ctx.truth.shape) < p_support
    support = known & draw
    query = known & ~draw
    return replace(ctx, support_mask=support, query_mask=query, eval_mask=np.zeros_like(known))


def training_context(g: RatingGraph, n: int, m: int, p_support: float, rng: np.random.Generator,
                     sampler: str = "neighborhood", max_tries: int = 10) -> PredictionContext:
    """Seed from one uniformly drawn rating of ``g`` and mask the result.

    Redraws (up to ``max_tries``) if the masks leave no query cell.
    """
    keys = g.rating_keys
    if not keys:
        raise SamplerError("training graph has no ratings")
    fn = SAMPLERS[sampler]
    ctx = None
    for _ in range(max_tries):
        u, i = keys[int(rng.integers(len(keys)))]
        ctx = assign_masks(fn(g, [(u, i)], n, m, rng), p_support, rng)
        if ctx.query_mask.any():
            return ctx
    return ctx
