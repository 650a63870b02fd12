"""Encoding users, items and rating states into the initial context tensor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .attention import uniform_init
from .sampler import MASKED, OBSERVED, PredictionContext, UNOBSERVED
from .tensor import Tensor


class EncodingError(ValueError):
    pass


@dataclass
class EncoderParams:
    """One bias-free linear map per attribute slot, plus one for ratings.

    A linear map applied to a one-hot vector selects one row of its weight,
    so every map is stored as a ``cardinality x f`` table and applied by row
    lookup. The rating table has ``r_max + 1`` rows; the last row encodes an
    unobserved cell. Masked targets map to the zero vector.
    """

    user: list[Tensor]
    item: list[Tensor]
    rating: Tensor
    r_max: int

    @classmethod
    def init(cls, user_cards, item_cards, r_max: int, f: int, rng: np.random.Generator, dtype=np.float32):
        return cls(
            user=[uniform_init(rng, c, (c, f), dtype) for c in user_cards],
            item=[uniform_init(rng, c, (c, f), dtype) for c in item_cards],
            rating=uniform_init(rng, r_max + 1, (r_max + 1, f), dtype),
            r_max=r_max,
        )

    @property
    def f(self) -> int:
        return self.rating.shape[1]

    @property
    def h(self) -> int:
        return len(self.user) + len(self.item) + 1

    @property
    def e(self) -> int:
        return self.h * self.f

    def named(self) -> dict[str, Tensor]:
        out = {f"enc.user.{s}": w for s, w in enumerate(self.user)}
        out.update({f"enc.item.{s}": w for s, w in enumerate(self.item)})
        out["enc.rating"] = self.rating
        return out


def _encode(tables: list[Tensor], attrs: np.ndarray, kind: str) -> Tensor:
    attrs = np.asarray(attrs, dtype=np.int64)
    if attrs.shape[-1] != len(tables):
        raise EncodingError(f"{kind} has {attrs.shape[-1]} attribute slots, encoder expects {len(tables)}")
    parts = []
    for s, w in enumerate(tables):
        idx = attrs[..., s]
        if idx.size and (idx.min() < 0 or idx.max() >= w.shape[0]):
            raise EncodingError(f"{kind} slot {s}: category outside 0..{w.shape[0] - 1}")
        parts.append(T.take_rows(w, idx))
    return T.concat_last(parts)


def encode_user(attrs, enc: EncoderParams) -> Tensor:
    """Concatenated slot embeddings; ``attrs`` is ``[h_u]`` or ``[..., h_u]``."""
    return _encode(enc.user, attrs, "user")


def encode_item(attrs, enc: EncoderParams) -> Tensor:
    return _encode(enc.item, attrs, "item")


def rating_indices(ctx: PredictionContext, r_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Row of the rating table per cell, and a 0/1 keep mask (0 for masked targets)."""
    state = ctx.rating_state
    idx = np.full(state.shape, r_max, dtype=np.int64)
    obs = state == OBSERVED
    idx[obs] = np.clip(np.rint(ctx.truth[obs]), 1, r_max).astype(np.int64) - 1
    keep = (state != MASKED).astype(np.float64)
    return idx, keep


def build_context_tensor(ctx: PredictionContext, enc: EncoderParams) -> Tensor:
    """``H[k, j] = user_k embedding || item_j embedding || rating-state embedding``."""
    n, m = ctx.n, ctx.m
    users = np.repeat(np.asarray(ctx.user_attrs)[:, None, :], m, axis=1)
    items = np.repeat(np.asarray(ctx.item_attrs)[None, :, :], n, axis=0)
    xu = encode_user(users, enc)
    xi = encode_item(items, enc)
    idx, keep = rating_indices(ctx, enc.r_max)
    xr = T.take_rows(enc.rating, idx)
    if not keep.all():
        mask = Tensor(np.broadcast_to(keep[:, :, None], xr.shape).astype(enc.rating.dtype))
        xr = T.mul(xr, mask)
    return T.concat_last([xu, xi, xr])


__all__ = [
    "EncoderParams",
    "EncodingError",
    "MASKED",
    "OBSERVED",
    "UNOBSERVED",
    "build_context_tensor",
    "encode_item",
    "encode_user",
    "rating_indices",
]
