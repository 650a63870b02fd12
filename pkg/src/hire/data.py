"""Rating graphs, dataset parsers and cold-start splits."""

from __future__ import annotations

import csv
import json
import logging
import math
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

SCENARIOS = ("uc", "ic", "uic", "warm")


class DataError(Exception):
    """Input data cannot be read or is inconsistent."""


class ParseError(DataError):
    pass


class SplitError(DataError):
    """The requested scenario cannot be built from this graph."""


@dataclass(eq=False)
class RatingGraph:
    """Bipartite user/item rating graph with categorical attributes.

    Entities are addressed by dense internal indices; ``user_ids`` and
    ``item_ids`` hold the original identifiers. ``user_attrs[u, s]`` is the
    category index of user ``u`` in attribute slot ``s``.
    """

    user_ids: list[str]
    item_ids: list[str]
    user_attrs: np.ndarray
    item_attrs: np.ndarray
    user_cards: tuple[int, ...]
    item_cards: tuple[int, ...]
    ratings: dict[tuple[int, int], float]
    r_max: int
    user_slots: tuple[str, ...] = ()
    item_slots: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.user_cards = tuple(int(c) for c in self.user_cards)
        self.item_cards = tuple(int(c) for c in self.item_cards)
        self.user_attrs = np.asarray(self.user_attrs, dtype=np.int64).reshape(len(self.user_ids), len(self.user_cards))
        self.item_attrs = np.asarray(self.item_attrs, dtype=np.int64).reshape(len(self.item_ids), len(self.item_cards))
        if not self.user_slots:
            self.user_slots = tuple(f"u{s}" for s in range(len(self.user_cards)))
        if not self.item_slots:
            self.item_slots = tuple(f"i{s}" for s in range(len(self.item_cards)))
        user_items: list[list[int]] = [[] for _ in self.user_ids]
        item_users: list[list[int]] = [[] for _ in self.item_ids]
        for u, i in self.ratings:
            user_items[u].append(i)
            item_users[i].append(u)
        self.rating_keys = tuple(self.ratings)
        self.user_items = tuple(tuple(sorted(x)) for x in user_items)
        self.item_users = tuple(tuple(sorted(x)) for x in item_users)
        self.validate()

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def h_u(self) -> int:
        return len(self.user_cards)

    @property
    def h_i(self) -> int:
        return len(self.item_cards)

    @property
    def n_ratings(self) -> int:
        return len(self.ratings)

    def validate(self) -> None:
        if self.user_attrs.shape[1] != self.h_u or self.item_attrs.shape[1] != self.h_i:
            raise DataError("attribute matrix width does not match slot count")
        for name, attrs, cards in (("user", self.user_attrs, self.user_cards),
                                   ("item", self.item_attrs, self.item_cards)):
            if attrs.size and ((attrs < 0).any() or (attrs >= np.array(cards)).any()):
                raise DataError(f"{name} attribute index outside its slot cardinality")
        for (u, i), r in self.ratings.items():
            if not (0 <= u < self.n_users and 0 <= i < self.n_items):
                raise DataError(f"rating ({u}, {i}) references a missing entity")

    def rating(self, u: int, i: int) -> float | None:
        return self.ratings.get((u, i))

    def with_ratings(self, ratings: dict[tuple[int, int], float]) -> "RatingGraph":
        """Same entities and attributes, different rating set."""
        return RatingGraph(self.user_ids, self.item_ids, self.user_attrs, self.item_attrs,
                           self.user_cards, self.item_cards, dict(ratings), self.r_max,
                           self.user_slots, self.item_slots, dict(self.meta))

    def subgraph(self, users: Sequence[int], items: Sequence[int]) -> "RatingGraph":
        """Restrict to the given entities (re-indexed in the given order).

        Slot cardinalities are kept so encoders stay compatible; ID slots are
        re-indexed along with the entities.
        """
        users = list(users)
        items = list(items)
        umap = {u: k for k, u in enumerate(users)}
        imap = {i: k for k, i in enumerate(items)}
        ratings = {(umap[u], imap[i]): r for (u, i), r in self.ratings.items() if u in umap and i in imap}
        user_attrs = self.user_attrs[users].copy()
        item_attrs = self.item_attrs[items].copy()
        user_cards = list(self.user_cards)
        item_cards = list(self.item_cards)
        for s, name in enumerate(self.user_slots):
            if name == "id":
                user_attrs[:, s] = np.arange(len(users))
                user_cards[s] = max(len(users), 1)
        for s, name in enumerate(self.item_slots):
            if name == "id":
                item_attrs[:, s] = np.arange(len(items))
                item_cards[s] = max(len(items), 1)
        meta = dict(self.meta)
        if "item_year" in meta:
            meta["item_year"] = [self.meta["item_year"][i] for i in items]
        return RatingGraph([self.user_ids[u] for u in users], [self.item_ids[i] for i in items],
                           user_attrs, item_attrs, user_cards, item_cards, ratings, self.r_max,
                           self.user_slots, self.item_slots, meta)

    def same_as(self, other: "RatingGraph") -> bool:
        return (self.user_ids == other.user_ids and self.item_ids == other.item_ids
                and np.array_equal(self.user_attrs, other.user_attrs)
                and np.array_equal(self.item_attrs, other.item_attrs)
                and self.user_cards == other.user_cards and self.item_cards == other.item_cards
                and self.ratings == other.ratings and self.r_max == other.r_max
                and self.user_slots == other.user_slots and self.item_slots == other.item_slots)


class _Vocab:
    def __init__(self):
        self.index: dict[str, int] = {}

    def add(self, value: str) -> int:
        return self.index.setdefault(value, len(self.index))

    def __len__(self):
        return max(len(self.index), 1)


def _encode_columns(rows: list[list[str]]) -> tuple[np.ndarray, list[int]]:
    """Map raw string attributes to per-slot category indices (first-seen order)."""
    width = len(rows[0]) if rows else 0
    vocabs = [_Vocab() for _ in range(width)]
    out = np.zeros((len(rows), width), dtype=np.int64)
    for r, row in enumerate(rows):
        for s, value in enumerate(row):
            out[r, s] = vocabs[s].add(value)
    return out, [len(v) for v in vocabs]


# ----------------------------------------------------------------- MovieLens

MOVIELENS_USER_SLOTS = ("age", "occupation", "gender", "zip")
MOVIELENS_ITEM_SLOTS = ("rate", "genre", "director", "actor")
_YEAR = re.compile(r"\((\d{4})\)\s*$")


def _first(value: str) -> str:
    value = value.strip()
    for sep in ("|", ","):
        if sep in value:
            value = value.split(sep)[0].strip()
    return value or "unknown"


def _read_lines(path: Path) -> Iterable[tuple[int, str]]:
    with open(path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if line:
                yield lineno, line


def parse_movielens(directory, r_max: int = 5, keep_unrated: bool = False) -> RatingGraph:
    """Read ``users.dat``, ``movies.dat`` and ``ratings.dat`` ("::" separated).

    User slots are age, occupation, gender and the first zip digit. Item slots
    are rate, genre, director and actor; the standard MovieLens-1M release
    carries only genres, so the other three fall back to ``"unknown"`` unless
    ``movies.dat`` has extra ``::rate::director::actors`` fields. List-valued
    fields keep their first entry.

    Malformed lines are skipped and counted in ``graph.meta["malformed"]``.
    """
    directory = Path(directory)
    paths = {name: directory / f"{name}.dat" for name in ("users", "movies", "ratings")}
    for name, p in paths.items():
        if not p.is_file():
            raise DataError(f"missing MovieLens file: {p}")

    malformed = 0

    def bad(path, lineno, why):
        nonlocal malformed
        malformed += 1
        log.warning("%s:%d: %s", path.name, lineno, why)

    user_rows: dict[str, list[str]] = {}
    for lineno, line in _read_lines(paths["users"]):
        parts = line.split("::")
        if len(parts) < 5 or not parts[0]:
            bad(paths["users"], lineno, "expected UserID::Gender::Age::Occupation::Zip")
            continue
        uid, gender, age, occupation, zipcode = parts[:5]
        zip_digit = zipcode.strip()[:1]
        zip_cat = zip_digit if zip_digit.isdigit() else "other"
        user_rows[uid] = [age.strip(), occupation.strip(), gender.strip(), zip_cat]

    item_rows: dict[str, list[str]] = {}
    item_year: dict[str, int] = {}
    for lineno, line in _read_lines(paths["movies"]):
        parts = line.split("::")
        if len(parts) < 3 or not parts[0]:
            bad(paths["movies"], lineno, "expected MovieID::Title::Genres")
            continue
        mid, title, genres = parts[:3]
        extra = parts[3:6] + ["unknown"] * (3 - len(parts[3:6]))
        rate, director, actors = (x.strip() or "unknown" for x in extra)
        item_rows[mid] = [rate, _first(genres), _first(director), _first(actors)]
        m = _YEAR.search(title.strip())
        item_year[mid] = int(m.group(1)) if m else 0

    raw: dict[tuple[str, str], float] = {}
    duplicates = 0
    for lineno, line in _read_lines(paths["ratings"]):
        parts = line.split("::")
        if len(parts) < 3:
            bad(paths["ratings"], lineno, "expected UserID::MovieID::Rating::Timestamp")
            continue
        uid, mid, value = parts[0], parts[1], parts[2].strip()
        try:
            rating = float(value)
        except ValueError:
            bad(paths["ratings"], lineno, f"non-numeric rating {value!r}")
            continue
        if not (1 <= rating <= r_max) or rating != int(rating):
            bad(paths["ratings"], lineno, f"rating {value} outside 1..{r_max}")
            continue
        if uid not in user_rows or mid not in item_rows:
            bad(paths["ratings"], lineno, "rating references unknown user or movie")
            continue
        if (uid, mid) in raw:
            duplicates += 1
        raw[(uid, mid)] = rating

    if keep_unrated:
        uids = list(user_rows)
        mids = list(item_rows)
    else:
        rated_u = {u for u, _ in raw}
        rated_i = {i for _, i in raw}
        uids = [u for u in user_rows if u in rated_u]
        mids = [i for i in item_rows if i in rated_i]
    uindex = {u: k for k, u in enumerate(uids)}
    iindex = {i: k for k, i in enumerate(mids)}
    user_attrs, user_cards = _encode_columns([user_rows[u] for u in uids])
    item_attrs, item_cards = _encode_columns([item_rows[i] for i in mids])
    if not uids:
        user_attrs, user_cards = np.zeros((0, 4), dtype=np.int64), [1, 1, 1, 1]
    if not mids:
        item_attrs, item_cards = np.zeros((0, 4), dtype=np.int64), [1, 1, 1, 1]
    ratings = {(uindex[u], iindex[i]): r for (u, i), r in raw.items()}
    meta = {"malformed": malformed, "duplicates": duplicates, "source": "movielens",
            "item_year": [item_year[i] for i in mids]}
    return RatingGraph(uids, mids, user_attrs, item_attrs, user_cards, item_cards, ratings,
                       r_max, MOVIELENS_USER_SLOTS, MOVIELENS_ITEM_SLOTS, meta)


# ----------------------------------------------------------------------- CSV


@dataclass(frozen=True)
class CsvSchema:
    """Column roles of a generic rating CSV."""

    user: str = "user"
    item: str = "item"
    rating: str = "rating"
    user_attrs: tuple[str, ...] = ()
    item_attrs: tuple[str, ...] = ()
    r_max: int | None = None
    ignore: tuple[str, ...] = ()


def parse_csv(path, schema: CsvSchema | None = None) -> RatingGraph:
    """Read a headed CSV of ratings.

    Entities without attribute columns get a single ``id`` slot holding their
    own index. Duplicate (user, item) rows: the last one wins and
    ``meta["duplicates"]`` counts them. Attribute values are taken from the
    first row an entity appears in.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing CSV file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file, expected a header row") from None
        known = {schema.user, schema.item, schema.rating, *schema.user_attrs, *schema.item_attrs, *schema.ignore}
        for col in header:
            if col not in known:
                raise ParseError(f"{path}: unknown column {col!r}")
        for col in (schema.user, schema.item, schema.rating, *schema.user_attrs, *schema.item_attrs):
            if col not in header:
                raise ParseError(f"{path}: required column {col!r} missing from header")
        pos = {c: header.index(c) for c in header}

        users: dict[str, list[str]] = {}
        items: dict[str, list[str]] = {}
        raw: dict[tuple[str, str], float] = {}
        duplicates = 0
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            u, i, value = row[pos[schema.user]].strip(), row[pos[schema.item]].strip(), row[pos[schema.rating]].strip()
            try:
                rating = float(value)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric rating {value!r}") from None
            if not math.isfinite(rating):
                raise ParseError(f"{path}:{lineno}: non-finite rating {value!r}")
            users.setdefault(u, [row[pos[c]].strip() for c in schema.user_attrs])
            items.setdefault(i, [row[pos[c]].strip() for c in schema.item_attrs])
            if (u, i) in raw:
                duplicates += 1
            raw[(u, i)] = rating

    uids, iids = list(users), list(items)
    uindex = {u: k for k, u in enumerate(uids)}
    iindex = {i: k for k, i in enumerate(iids)}

    def attrs(rows, ids, names):
        if names:
            if not rows:
                return np.zeros((0, len(names)), dtype=np.int64), [1] * len(names), tuple(names)
            a, cards = _encode_columns([rows[x] for x in ids])
            return a, cards, tuple(names)
        return np.arange(len(ids), dtype=np.int64).reshape(-1, 1), [max(len(ids), 1)], ("id",)

    user_attrs, user_cards, user_slots = attrs(users, uids, schema.user_attrs)
    item_attrs, item_cards, item_slots = attrs(items, iids, schema.item_attrs)
    ratings = {(uindex[u], iindex[i]): r for (u, i), r in raw.items()}
    if schema.r_max is not None:
        r_max = int(schema.r_max)
    else:
        r_max = int(math.ceil(max(raw.values()))) if raw else 5
    return RatingGraph(uids, iids, user_attrs, item_attrs, user_cards, item_cards, ratings, r_max,
                       user_slots, item_slots, {"duplicates": duplicates, "source": "csv"})


# --------------------------------------------------------------- graph cache

GRAPH_MAGIC = b"HIRG"
GRAPH_VERSION = 1


def _put_str(buf: list[bytes], s: str) -> None:
    raw = s.encode("utf-8")
    buf.append(struct.pack("<I", len(raw)))
    buf.append(raw)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DataError("graph cache truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")

    def array(self, dtype, count: int) -> np.ndarray:
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count), dtype=dt).copy()


def save_graph(g: RatingGraph, path) -> None:
    """Write the binary cache.

    Layout (little-endian): magic ``HIRG``, u32 version, u32 counts
    (users, items, user slots, item slots, r_max), u64 rating count, u32
    cardinalities, length-prefixed UTF-8 slot names and entity ids, int64
    attribute matrices, then int64 user, int64 item and float64 value columns
    of the ratings, and a length-prefixed JSON ``meta`` blob.
    """
    buf: list[bytes] = [GRAPH_MAGIC, struct.pack("<I", GRAPH_VERSION)]
    buf.append(struct.pack("<5IQ", g.n_users, g.n_items, g.h_u, g.h_i, g.r_max, g.n_ratings))
    buf.append(struct.pack(f"<{g.h_u}I", *g.user_cards))
    buf.append(struct.pack(f"<{g.h_i}I", *g.item_cards))
    for s in (*g.user_slots, *g.item_slots, *g.user_ids, *g.item_ids):
        _put_str(buf, s)
    buf.append(g.user_attrs.astype("<i8").tobytes())
    buf.append(g.item_attrs.astype("<i8").tobytes())
    keys = list(g.ratings)
    buf.append(np.array([k[0] for k in keys], dtype="<i8").tobytes())
    buf.append(np.array([k[1] for k in keys], dtype="<i8").tobytes())
    buf.append(np.array([g.ratings[k] for k in keys], dtype="<f8").tobytes())
    _put_str(buf, json.dumps(g.meta))
    Path(path).write_bytes(b"".join(buf))


def load_graph(path) -> RatingGraph:
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != GRAPH_MAGIC:
        raise DataError(f"{path}: not a graph cache (bad magic)")
    (version,) = r.unpack("<I")
    if version != GRAPH_VERSION:
        raise DataError(f"{path}: unsupported graph cache version {version}")
    n_users, n_items, h_u, h_i, r_max, n_ratings = r.unpack("<5IQ")
    user_cards = r.unpack(f"<{h_u}I")
    item_cards = r.unpack(f"<{h_i}I")
    user_slots = tuple(r.string() for _ in range(h_u))
    item_slots = tuple(r.string() for _ in range(h_i))
    user_ids = [r.string() for _ in range(n_users)]
    item_ids = [r.string() for _ in range(n_items)]
    user_attrs = r.array("<i8", n_users * h_u).reshape(n_users, h_u)
    item_attrs = r.array("<i8", n_items * h_i).reshape(n_items, h_i)
    us = r.array("<i8", n_ratings)
    its = r.array("<i8", n_ratings)
    vals = r.array("<f8", n_ratings)
    meta = json.loads(r.string())
    ratings = {(int(u), int(i)): float(v) for u, i, v in zip(us, its, vals)}
    return RatingGraph(user_ids, item_ids, user_attrs, item_attrs, user_cards, item_cards, ratings,
                       int(r_max), user_slots, item_slots, meta)


# -------------------------------------------------------------------- splits


@dataclass
class ScenarioSplit:
    """Entity partition plus the visibility of every rating touching a test entity.

    ``observable`` ratings of test entities may be shown to the model at test
    time; ``evaluation`` ratings are only used as ground truth. Validation
    entities (left over when the ratios sum below one) are held out of both.
    """

    scenario: str
    train_users: frozenset
    test_users: frozenset
    train_items: frozenset
    test_items: frozenset
    observable: frozenset
    evaluation: frozenset
    val_users: frozenset = frozenset()
    val_items: frozenset = frozenset()
    seed: int = 0

    def is_train_rating(self, u: int, i: int) -> bool:
        if self.scenario == "warm":
            return (u, i) not in self.evaluation
        return u in self.train_users and i in self.train_items

    def train_graph(self, g: RatingGraph) -> RatingGraph:
        return g.with_ratings({k: r for k, r in g.ratings.items() if self.is_train_rating(*k)})

    def visible_graph(self, g: RatingGraph) -> RatingGraph:
        """Training ratings plus the observable ratings of test entities."""
        keep = {k: r for k, r in g.ratings.items() if self.is_train_rating(*k) or k in self.observable}
        return g.with_ratings(keep)

    def is_cold(self, u: int, i: int) -> bool:
        """Whether a rating is a cold-start target under this scenario."""
        if self.scenario == "uc":
            return u in self.test_users
        if self.scenario == "ic":
            return i in self.test_items
        if self.scenario == "uic":
            return u in self.test_users and i in self.test_items
        return u in self.test_users and (u, i) in self.evaluation


def observable_count(n_interactions: int, fraction: float = 0.1, cap: int = 3) -> int:
    """How many of a test entity's ratings stay visible: 10%, at most 3."""
    return min(cap, int(n_interactions * fraction))


def _partition(ids: np.ndarray, ratios: tuple[float, float], rng: np.random.Generator):
    perm = rng.permutation(ids)
    n = len(perm)
    n_train = int(round(ratios[0] * n))
    n_test = min(int(round(ratios[1] * n)), n - n_train)
    train = frozenset(int(x) for x in perm[:n_train])
    test = frozenset(int(x) for x in perm[n_train:n_train + n_test])
    val = frozenset(int(x) for x in perm[n_train + n_test:])
    return train, test, val


def make_split(g: RatingGraph, scenario: str, ratios=(0.8, 0.2), seed: int = 0,
               item_split: str = "random", observable_fraction: float = 0.1,
               observable_cap: int = 3, warm_holdout: float = 0.2) -> ScenarioSplit:
    """Partition users and/or items into train and test sides for a scenario.

    ``ratios`` is ``(train, test)`` or a single train fraction; entities beyond
    their sum are validation. ``item_split="year"`` puts items released before
    1997 on the train side (needs ``meta["item_year"]``).
    """
    scenario = scenario.lower()
    if scenario not in SCENARIOS:
        raise SplitError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
    if isinstance(ratios, (int, float)):
        ratios = (float(ratios), 1.0 - float(ratios))
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 2 or min(ratios) < 0 or sum(ratios) > 1 + 1e-9:
        raise SplitError(f"ratios must be (train, test) with sum <= 1, got {ratios}")
    if g.n_ratings == 0:
        raise SplitError("cannot split a graph without ratings")

    rng = np.random.default_rng(seed)
    all_users = frozenset(range(g.n_users))
    all_items = frozenset(range(g.n_items))
    users_rng, items_rng, vis_rng = (np.random.default_rng(s) for s in rng.integers(0, 2**63, 3))

    if scenario in ("uc", "uic"):
        train_u, test_u, val_u = _partition(np.arange(g.n_users), ratios, users_rng)
    else:
        train_u, test_u, val_u = all_users, frozenset(), frozenset()
    if scenario in ("ic", "uic"):
        if item_split == "year":
            years = g.meta.get("item_year")
            if not years:
                raise SplitError("year-based item split needs item release years")
            train_i = frozenset(i for i in range(g.n_items) if 0 < years[i] < 1997)
            test_i = all_items - train_i
            val_i = frozenset()
        else:
            train_i, test_i, val_i = _partition(np.arange(g.n_items), ratios, items_rng)
    else:
        train_i, test_i, val_i = all_items, frozenset(), frozenset()

    observable: set = set()
    evaluation: set = set()

    if scenario == "warm":
        candidates = np.array([u for u in range(g.n_users) if len(g.user_items[u]) >= 2])
        if candidates.size == 0:
            raise SplitError("warm scenario needs users with at least two ratings")
        n_test = max(1, int(round(ratios[1] * candidates.size)))
        test_u = frozenset(int(u) for u in users_rng.choice(candidates, size=min(n_test, candidates.size), replace=False))
        for u in sorted(test_u):
            items = np.array(g.user_items[u])
            k = min(len(items) - 1, max(1, int(round(warm_holdout * len(items)))))
            held = vis_rng.choice(items, size=k, replace=False)
            evaluation.update((u, int(i)) for i in held)
        train_u = all_users
    else:
        if scenario in ("uc", "uic") and not test_u:
            raise SplitError("split produced no test users")
        if scenario in ("ic", "uic") and not test_i:
            raise SplitError("split produced no test items")
        # group the ratings that touch a test entity by the entity that owns them
        groups: dict[tuple[str, int], list[tuple[int, int]]] = {}
        for (u, i) in sorted(g.ratings):
            if u in test_u:
                groups.setdefault(("u", u), []).append((u, i))
            elif i in test_i:
                groups.setdefault(("i", i), []).append((u, i))
        for key in sorted(groups):
            pairs = groups[key]
            k = observable_count(len(pairs), observable_fraction, observable_cap)
            chosen = set(vis_rng.choice(len(pairs), size=k, replace=False).tolist()) if k else set()
            for idx, pair in enumerate(pairs):
                (observable if idx in chosen else evaluation).add(pair)
        if scenario == "uic" and not any(u in test_u and i in test_i for (u, i) in evaluation):
            raise SplitError("user-and-item cold split has no ratings between test users and test items")

    return ScenarioSplit(scenario, frozenset(train_u), frozenset(test_u), frozenset(train_i), frozenset(test_i),
                         frozenset(observable), frozenset(evaluation), frozenset(val_u), frozenset(val_i), seed)
