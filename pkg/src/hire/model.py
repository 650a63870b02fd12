"""The HIRE network: stacked interaction blocks over a context tensor.

Each block applies three multi-head self-attention layers in order:
between users (per item column), between items (per user row), and between
attribute slots (per cell). A cellwise linear decoder followed by a scaled
sigmoid produces the rating matrix.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .attention import MhsaParams, mhsa, uniform_init
from .embedding import EncoderParams, build_context_tensor
from .sampler import PredictionContext
from .tensor import ShapeError, Tensor

LAYERS = ("mbu", "mbi", "mba")
NORMS = ("none", "pre", "post")


@dataclass
class ModelConfig:
    user_cards: tuple[int, ...]
    item_cards: tuple[int, ...]
    r_max: int = 5
    feat_dim: int = 16
    blocks: int = 3
    heads: int = 8
    head_dim: int = 16
    # attribute attention runs at width feat_dim, too narrow for 8 x 16 heads
    mba_heads: int = 4
    mba_head_dim: int = 4
    # A bare stack of attention layers loses all across-cell variation within
    # a few layers and cannot fit even a tiny table, so by default each layer
    # is wrapped as h + attn(layer_norm(h)). residual=False, norm="none"
    # gives the bare stack.
    residual: bool = True
    norm: str = "pre"
    alpha: float | None = None
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        self.user_cards = tuple(int(c) for c in self.user_cards)
        self.item_cards = tuple(int(c) for c in self.item_cards)
        if self.blocks < 1:
            raise ValueError("blocks must be >= 1")
        if min(self.heads, self.head_dim, self.mba_heads, self.mba_head_dim, self.feat_dim) < 1:
            raise ValueError("head counts and dimensions must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype}")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}, got {self.norm!r}")

    @property
    def h(self) -> int:
        return len(self.user_cards) + len(self.item_cards) + 1

    @property
    def e(self) -> int:
        return self.h * self.feat_dim

    @property
    def scale(self) -> float:
        return float(self.r_max if self.alpha is None else self.alpha)


@dataclass
class HimBlock:
    mbu: MhsaParams
    mbi: MhsaParams
    mba: MhsaParams


def mbu_forward(h: Tensor, p: MhsaParams, return_weights: bool = False):
    """Attention across users, separately for every item column."""
    cols = T.transpose(h, (1, 0, 2))
    out = mhsa(cols, p, return_weights)
    if return_weights:
        out, a = out
        return T.transpose(out, (1, 0, 2)), a
    return T.transpose(out, (1, 0, 2))


def mbi_forward(h: Tensor, p: MhsaParams, return_weights: bool = False):
    """Attention across items, separately for every user row."""
    return mhsa(h, p, return_weights)


def mba_forward(h: Tensor, p: MhsaParams, f: int, return_weights: bool = False):
    """Attention across the attribute slots inside every cell."""
    n, m, e = h.shape
    if e % f:
        raise ShapeError(f"mba: width {e} is not a multiple of the slot width {f}")
    cells = T.reshape(h, (n, m, e // f, f))
    out = mhsa(cells, p, return_weights)
    if return_weights:
        out, a = out
        return T.reshape(out, (n, m, e)), a
    return T.reshape(out, (n, m, e))


class HireModel:
    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray] | None = None):
        self.config = config
        c = config
        dtype = np.dtype(c.dtype)
        rng = np.random.default_rng(c.seed)
        self.enc = EncoderParams.init(c.user_cards, c.item_cards, c.r_max, c.feat_dim, rng, dtype)
        self.blocks = [
            HimBlock(
                mbu=MhsaParams.init(c.e, c.heads, c.head_dim, rng=rng, dtype=dtype),
                mbi=MhsaParams.init(c.e, c.heads, c.head_dim, rng=rng, dtype=dtype),
                mba=MhsaParams.init(c.feat_dim, c.mba_heads, c.mba_head_dim, rng=rng, dtype=dtype),
            )
            for _ in range(c.blocks)
        ]
        self.dec_w = uniform_init(rng, c.e, (c.e, 1), dtype)
        self.dec_b = uniform_init(rng, c.e, (1,), dtype)
        if params is not None:
            self.load_state(params)

    # ------------------------------------------------------------ parameters

    def named_parameters(self) -> dict[str, Tensor]:
        out = dict(self.enc.named())
        for b, blk in enumerate(self.blocks):
            for layer in LAYERS:
                out.update(getattr(blk, layer).named(f"block{b}.{layer}"))
        out["decoder.w"] = self.dec_w
        out["decoder.b"] = self.dec_b
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        own = self.named_parameters()
        if set(own) != set(state):
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            raise ValueError(f"parameter names differ (missing {missing[:3]}, unexpected {extra[:3]})")
        for k, p in own.items():
            arr = np.asarray(state[k])
            if arr.shape != p.shape:
                raise ValueError(f"parameter {k}: shape {arr.shape} != {p.shape}")
            p.data[...] = arr.astype(p.dtype)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    # --------------------------------------------------------------- forward

    def _layer(self, name: str, blk: HimBlock, h: Tensor, record: list | None, b: int) -> Tensor:
        p = getattr(blk, name)
        want = record is not None
        x = T.layer_norm(h) if self.config.norm == "pre" else h
        if name == "mbu":
            out = mbu_forward(x, p, want)
        elif name == "mbi":
            out = mbi_forward(x, p, want)
        else:
            out = mba_forward(x, p, self.config.feat_dim, want)
        if want:
            out, a = out
            record.append({"block": b, "layer": name, "weights": a})
        if self.config.residual:
            out = T.add(h, out)
        if self.config.norm == "post":
            out = T.layer_norm(out)
        return out

    def encode(self, ctx: PredictionContext) -> Tensor:
        return build_context_tensor(ctx, self.enc)

    def forward_tensor(self, h: Tensor, record: list | None = None) -> Tensor:
        """Blocks and decoder applied to a prepared context tensor ``[n, m, e]``."""
        if h.ndim != 3 or h.shape[2] != self.config.e:
            raise ShapeError(f"context tensor must be n x m x {self.config.e}, got {h.shape}")
        for b, blk in enumerate(self.blocks):
            for name in LAYERS:
                h = self._layer(name, blk, h, record, b)
        if self.config.norm == "pre":
            h = T.layer_norm(h)
        n, m, _ = h.shape
        logits = T.linear(h, self.dec_w, self.dec_b)
        return T.scale(T.sigmoid(T.reshape(logits, (n, m))), self.config.scale)

    def forward(self, ctx: PredictionContext, record: list | None = None) -> Tensor:
        """Predicted ratings ``[n, m]``, each in ``(0, alpha)``."""
        return self.forward_tensor(self.encode(ctx), record)

    __call__ = forward

    def predict(self, ctx: PredictionContext) -> np.ndarray:
        return self.forward(ctx).data.astype(np.float64)

    def dump_attention(self, ctx: PredictionContext) -> list[dict]:
        """Attention weights of every layer for one context.

        Each entry has ``block``, ``layer`` and ``weights``; weights are
        ``[m, heads, n, n]`` for mbu, ``[n, heads, m, m]`` for mbi and
        ``[n, m, heads, h, h]`` for mba.
        """
        record: list[dict] = []
        self.forward(ctx, record)
        return record


# ------------------------------------------------------------------ checkpoint

CHECKPOINT_MAGIC = b"HIRE"
CHECKPOINT_VERSION = 1


def save_checkpoint(model: HireModel, path, extra: dict | None = None) -> None:
    """Binary checkpoint, little-endian.

    ``HIRE``, u32 version, u32 length + UTF-8 JSON of hyperparameters (and
    ``extra``), u32 tensor count, then per tensor: u32 name length, name,
    u32 rank, u32 dims, float32 payload.
    """
    header = {"config": asdict(model.config), "extra": extra or {}}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    params = model.named_parameters()
    buf = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(blob)), blob,
           struct.pack("<I", len(params))]
    for name, p in params.items():
        raw = name.encode("utf-8")
        buf.append(struct.pack("<I", len(raw)))
        buf.append(raw)
        buf.append(struct.pack(f"<I{p.ndim}I", p.ndim, *p.shape))
        buf.append(p.data.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(buf))


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a HIRE checkpoint")
    version, n = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    header = json.loads(data[pos:pos + n].decode("utf-8"))
    pos += n
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    tensors = {}
    for _ in range(count):
        (ln,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos:pos + ln].decode("utf-8")
        pos += ln
        (rank,) = struct.unpack_from("<I", data, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        tensors[name] = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(dims).copy()
        pos += 4 * size
    return header, tensors


def load_checkpoint(path) -> tuple[HireModel, dict]:
    header, tensors = read_checkpoint(path)
    config = ModelConfig(**header["config"])
    return HireModel(config, tensors), header.get("extra", {})
