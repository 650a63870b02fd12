"""Synthetic rating graphs with attribute-driven preferences.

Used by tests and demos in place of downloaded datasets. Each attribute value
carries a random latent vector; an entity's taste is the sum over its slots
plus noise, so attributes are informative about ratings of cold entities.
Item popularity follows a power law and is mildly correlated with quality,
which gives the Popularity baseline something to find.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import MOVIELENS_ITEM_SLOTS, MOVIELENS_USER_SLOTS, RatingGraph

DEFAULT_USER_CARDS = (7, 21, 2, 10)
DEFAULT_ITEM_CARDS = (5, 18, 30, 40)


def synthetic_graph(n_users: int = 200, n_items: int = 200, density: float = 0.08, seed: int = 0,
                    user_cards=DEFAULT_USER_CARDS, item_cards=DEFAULT_ITEM_CARDS, r_max: int = 5,
                    dim: int = 4, noise: float = 0.3) -> RatingGraph:
    rng = np.random.default_rng(seed)
    user_attrs = np.stack([rng.integers(0, c, n_users) for c in user_cards], axis=1)
    item_attrs = np.stack([rng.integers(0, c, n_items) for c in item_cards], axis=1)

    def taste(attrs, cards):
        tables = [rng.normal(0, 1 / np.sqrt(len(cards)), (c, dim)) for c in cards]
        vec = sum(t[attrs[:, s]] for s, t in enumerate(tables))
        return vec + rng.normal(0, 0.3, vec.shape)

    u = taste(user_attrs, user_cards)
    v = taste(item_attrs, item_cards)
    quality = rng.normal(0, 0.6, n_items)
    pop = rng.pareto(1.5, n_items) + 1.0 + np.exp(quality)
    pop /= pop.sum()

    ratings = {}
    per_user = max(1, int(round(density * n_items)))
    mid = (1 + r_max) / 2
    for a in range(n_users):
        k = min(n_items, max(3, int(rng.poisson(per_user))))
        items = rng.choice(n_items, size=k, replace=False, p=pop)
        for i in items:
            score = mid + 1.2 * float(u[a] @ v[i]) + quality[i] + rng.normal(0, noise)
            ratings[(a, int(i))] = float(np.clip(np.rint(score), 1, r_max))
    return RatingGraph(
        [str(a + 1) for a in range(n_users)], [str(i + 1) for i in range(n_items)],
        user_attrs.astype(np.int64), item_attrs.astype(np.int64),
        tuple(user_cards), tuple(item_cards), ratings, r_max,
        MOVIELENS_USER_SLOTS if len(user_cards) == 4 else (),
        MOVIELENS_ITEM_SLOTS if len(item_cards) == 4 else (),
        {"source": "synthetic", "seed": seed, "item_year": [1990 + i % 10 for i in range(n_items)]},
    )


def write_movielens(g: RatingGraph, directory) -> Path:
    """Write ``g`` as ``users.dat``/``movies.dat``/``ratings.dat`` in MovieLens-1M layout.

    Attribute categories are written as ``s<slot>v<value>`` tokens; item rate,
    director and actor go into the optional trailing fields.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    genders = "MF"
    with open(directory / "users.dat", "w", encoding="latin-1") as fh:
        for a, uid in enumerate(g.user_ids):
            age, occ, gender, zipc = (int(x) for x in g.user_attrs[a][:4])
            fh.write(f"{uid}::{genders[gender % 2]}::{age}::{occ}::{zipc}0000\n")
    with open(directory / "movies.dat", "w", encoding="latin-1") as fh:
        years = g.meta.get("item_year") or [0] * g.n_items
        for i, mid in enumerate(g.item_ids):
            rate, genre, director, actor = (int(x) for x in g.item_attrs[i][:4])
            fh.write(f"{mid}::Movie {mid} ({years[i]})::g{genre}|g{(genre + 1) % 18}::r{rate}::d{director}::a{actor}|a0\n")
    with open(directory / "ratings.dat", "w", encoding="latin-1") as fh:
        for (a, i), r in sorted(g.ratings.items()):
            fh.write(f"{g.user_ids[a]}::{g.item_ids[i]}::{int(r)}::978300760\n")
    return directory
