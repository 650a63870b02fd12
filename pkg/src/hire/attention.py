"""Scaled dot-product self-attention and its multi-head form.

Per-head projections are stored side by side: ``wq`` has shape
``d x (heads * dk)`` and columns ``[h*dk:(h+1)*dk]`` belong to head ``h``.
This is the same parameterisation as separate per-head matrices, only laid
out for one matmul instead of ``heads`` of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


def uniform_init(rng: np.random.Generator, fan_in: int, shape, dtype) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


@dataclass
class MhsaParams:
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    heads: int
    dk: int
    dv: int

    @classmethod
    def init(cls, d: int, heads: int, dk: int, dv: int | None = None, d_out: int | None = None,
             rng: np.random.Generator | None = None, dtype=np.float32) -> "MhsaParams":
        dv = dk if dv is None else dv
        d_out = d if d_out is None else d_out
        rng = np.random.default_rng(0) if rng is None else rng
        return cls(
            wq=uniform_init(rng, d, (d, heads * dk), dtype),
            wk=uniform_init(rng, d, (d, heads * dk), dtype),
            wv=uniform_init(rng, d, (d, heads * dv), dtype),
            wo=uniform_init(rng, heads * dv, (heads * dv, d_out), dtype),
            heads=heads,
            dk=dk,
            dv=dv,
        )

    def __post_init__(self):
        d = self.wq.shape[0]
        if self.wk.shape != (d, self.heads * self.dk) or self.wq.shape != (d, self.heads * self.dk):
            raise ShapeError(f"query/key weights must be {d}x{self.heads * self.dk}, "
                             f"got {self.wq.shape} and {self.wk.shape}")
        if self.wv.shape != (d, self.heads * self.dv):
            raise ShapeError(f"value weight must be {d}x{self.heads * self.dv}, got {self.wv.shape}")
        if self.wo.shape[0] != self.heads * self.dv:
            raise ShapeError(f"output weight needs {self.heads * self.dv} input rows, got {self.wo.shape}")

    @property
    def d_in(self) -> int:
        return self.wq.shape[0]

    @property
    def d_out(self) -> int:
        return self.wo.shape[1]

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.wq": self.wq, f"{prefix}.wk": self.wk,
                f"{prefix}.wv": self.wv, f"{prefix}.wo": self.wo}

    def head(self, h: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Plain-array (W_Q, W_K, W_V) of head ``h``."""
        q = slice(h * self.dk, (h + 1) * self.dk)
        v = slice(h * self.dv, (h + 1) * self.dv)
        return self.wq.data[:, q], self.wk.data[:, q], self.wv.data[:, v]


def self_attention(x: Tensor, wq: Tensor, wk: Tensor, wv: Tensor, return_weights: bool = False):
    """softmax(X Wq (X Wk)^T / sqrt(dk)) X Wv over the token axis (second to last)."""
    if x.shape[-1] != wq.shape[0]:
        raise ShapeError(f"self_attention: input width {x.shape[-1]} != weight rows {wq.shape[0]}")
    dk = wq.shape[1]
    q = T.matmul(x, wq)
    k = T.matmul(x, wk)
    scores = T.scale(T.matmul(q, T.transpose(k)), 1.0 / math.sqrt(dk))
    a = T.softmax_rows(scores)
    out = T.matmul(a, T.matmul(x, wv))
    return (out, a.data) if return_weights else out


def _split_heads(x: Tensor, heads: int, dim: int) -> Tensor:
    # [..., t, heads*dim] -> [..., heads, t, dim]
    lead = x.shape[:-1]
    y = T.reshape(x, lead + (heads, dim))
    nd = y.ndim
    axes = list(range(nd - 3)) + [nd - 2, nd - 3, nd - 1]
    return T.transpose(y, axes)


def _merge_heads(x: Tensor) -> Tensor:
    # [..., heads, t, dim] -> [..., t, heads*dim]
    nd = x.ndim
    axes = list(range(nd - 3)) + [nd - 2, nd - 3, nd - 1]
    y = T.transpose(x, axes)
    return T.reshape(y, y.shape[:-2] + (y.shape[-2] * y.shape[-1],))


def mhsa(x: Tensor, p: MhsaParams, return_weights: bool = False):
    """Multi-head self-attention over axis -2 of ``x``; leading axes are batch.

    With ``return_weights`` also returns the attention array of shape
    ``[..., heads, t, t]``.
    """
    if x.ndim < 2:
        raise ShapeError(f"mhsa: input must have a token axis, got {x.shape}")
    if x.shape[-1] != p.d_in:
        raise ShapeError(f"mhsa: input width {x.shape[-1]} != parameter width {p.d_in}")
    q = _split_heads(T.matmul(x, p.wq), p.heads, p.dk)
    k = _split_heads(T.matmul(x, p.wk), p.heads, p.dk)
    v = _split_heads(T.matmul(x, p.wv), p.heads, p.dv)
    scores = T.scale(T.matmul(q, T.transpose(k)), 1.0 / math.sqrt(p.dk))
    a = T.softmax_rows(scores)
    heads_out = T.matmul(a, v)
    out = T.matmul(_merge_heads(heads_out), p.wo)
    return (out, a.data) if return_weights else out
