"""Masked-MSE training with LAMB, Lookahead and a flat-then-cosine schedule."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import tensor as T
from .data import RatingGraph, ScenarioSplit
from .model import HireModel
from .sampler import PredictionContext, training_context
from .tensor import Tape, Tensor

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; ``state`` holds the last good parameters."""

    def __init__(self, step: int, state: dict[str, np.ndarray]):
        super().__init__(f"loss is not finite at step {step}")
        self.step = step
        self.state = state


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class OptimizerConfig:
    base_lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-6
    lookahead_alpha: float = 0.5
    lookahead_k: int = 6
    clip_norm: float = 1.0
    flat_fraction: float = 0.7
    total_steps: int = 1000
    batch_size: int = 4
    seed: int = 0
    trust_clip: float = 10.0
    converge_window: int = 100
    converge_tol: float = 1e-4

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)
        if not 0.0 < self.flat_fraction < 1.0:
            raise ValueError("flat_fraction must lie strictly between 0 and 1")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if self.total_steps < 1 or self.batch_size < 1 or self.lookahead_k < 1:
            raise ValueError("total_steps, batch_size and lookahead_k must be >= 1")


def lr_at(step: float, cfg: OptimizerConfig) -> float:
    """Base rate for the first ``flat_fraction`` of steps, then cosine to zero."""
    total = cfg.total_steps
    flat = cfg.flat_fraction * total
    if step <= flat:
        return cfg.base_lr
    progress = min(1.0, (step - flat) / (total - flat))
    return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def masked_mse(pred: Tensor, truth: np.ndarray, query_mask: np.ndarray) -> Tensor:
    """Mean squared error over the query cells of one context."""
    count = int(np.count_nonzero(query_mask))
    if count == 0:
        raise ValueError("masked_mse: the query mask is empty")
    target = np.where(query_mask, np.nan_to_num(truth), 0.0).astype(pred.dtype)
    mask = Tensor(query_mask.astype(pred.dtype))
    diff = T.mul(T.sub(pred, Tensor(target)), mask)
    return T.scale(T.sum_all(T.mul(diff, diff)), 1.0 / count)


def batch_loss(losses: Sequence[Tensor]) -> Tensor:
    """Mean of per-context losses."""
    if not losses:
        raise ValueError("batch has no context with query cells")
    total = losses[0]
    for extra in losses[1:]:
        total = T.add(total, extra)
    return T.scale(total, 1.0 / len(losses))


def global_norm(params: Iterable[Tensor]) -> float:
    sq = 0.0
    for p in params:
        if p.grad is not None:
            sq += float(np.sum(p.grad.astype(np.float64) ** 2))
    return math.sqrt(sq)


def clip_grad_norm(params: Sequence[Tensor], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    norm = global_norm(params)
    if norm > max_norm:
        factor = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= p.grad.dtype.type(factor)
    return norm


@dataclass
class LambState:
    t: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def zeros(cls, params: dict[str, np.ndarray]) -> "LambState":
        return cls(0, {k: np.zeros(np.shape(p)) for k, p in params.items()},
                   {k: np.zeros(np.shape(p)) for k, p in params.items()})

    def copy(self) -> "LambState":
        return LambState(self.t, {k: v.copy() for k, v in self.m.items()},
                         {k: v.copy() for k, v in self.v.items()})


def lamb_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray | None], lr: float,
              cfg: OptimizerConfig, state: LambState) -> dict[str, float]:
    """One LAMB update, in place on ``params`` and ``state``; no weight decay.

    The Adam-style step of each tensor is rescaled by ``||w|| / ||step||``,
    clipped to ``[0, trust_clip]``. When either norm is zero the ratio is one.
    Returns the trust ratio used per tensor.
    """
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            bad = int(np.count_nonzero(~np.isfinite(g)))
            raise NonFiniteGradient(f"gradient of {name} has {bad} NaN/Inf entries at step {state.t + 1}")
    b1, b2 = cfg.betas
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    trust_used = {}
    for name, w in params.items():
        g = grads.get(name)
        g = np.zeros(w.shape) if g is None else g.astype(np.float64)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + cfg.eps)
        w_norm = float(np.linalg.norm(w))
        u_norm = float(np.linalg.norm(update))
        trust = 1.0 if w_norm == 0.0 or u_norm == 0.0 else min(w_norm / u_norm, cfg.trust_clip)
        trust_used[name] = trust
        w -= (lr * trust * update).astype(w.dtype)
    return trust_used


def lookahead_sync(fast: dict[str, np.ndarray], slow: dict[str, np.ndarray], alpha: float, k: int,
                   step: int) -> bool:
    """At every multiple of ``k``: ``slow += alpha * (fast - slow)``, then ``fast <- slow``.

    Arrays are updated in place. Returns whether a sync happened.
    """
    if step % k:
        return False
    for name, arr in fast.items():
        slow[name] += alpha * (arr.astype(np.float64) - slow[name])
        arr[...] = slow[name].astype(arr.dtype)
    return True


@dataclass
class StepRecord:
    step: int
    lr: float
    loss: float
    grad_norm: float


class Trainer:
    """One optimizer step per call to :meth:`step`.

    ``sample`` draws one training context from a generator; it is called
    ``batch_size`` times per step, always in the same order, so a fixed seed
    gives a bitwise-identical trajectory.
    """

    def __init__(self, model: HireModel, cfg: OptimizerConfig,
                 sample: Callable[[np.random.Generator], PredictionContext]):
        self.model = model
        self.cfg = cfg
        self.sample = sample
        self.params = model.named_parameters()
        arrays = self.arrays()
        self.lamb = LambState.zeros(arrays)
        self.slow = {k: a.astype(np.float64) for k, a in arrays.items()}
        self.rng = np.random.default_rng(cfg.seed)
        self.step_count = 0
        self.sync_steps: list[int] = []
        self.trace: list[StepRecord] = []

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: p.data for k, p in self.params.items()}

    def step(self) -> StepRecord:
        contexts = [self.sample(self.rng) for _ in range(self.cfg.batch_size)]
        contexts = [c for c in contexts if c.query_mask.any()]
        self.model.zero_grad()
        with Tape() as tape:
            loss = batch_loss([masked_mse(self.model(c), c.truth, c.query_mask) for c in contexts])
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDiverged(self.step_count + 1, self.model.state())
            tape.backward(loss)
        norm = clip_grad_norm(list(self.params.values()), self.cfg.clip_norm)
        lr = lr_at(self.step_count, self.cfg)
        lamb_step(self.arrays(), {k: p.grad for k, p in self.params.items()}, lr, self.cfg, self.lamb)
        self.step_count += 1
        if lookahead_sync(self.arrays(), self.slow, self.cfg.lookahead_alpha, self.cfg.lookahead_k,
                          self.step_count):
            self.sync_steps.append(self.step_count)
        rec = StepRecord(self.step_count, lr, value, norm)
        self.trace.append(rec)
        return rec

    def converged(self) -> bool:
        w = self.cfg.converge_window
        if len(self.trace) < 2 * w:
            return False
        losses = [r.loss for r in self.trace[-2 * w:]]
        before = sum(losses[:w]) / w
        now = sum(losses[w:]) / w
        return abs(now - before) / max(abs(before), 1e-12) < self.cfg.converge_tol

    def fit(self, steps: int | None = None, stop_on_convergence: bool = True,
            on_step: Callable[[StepRecord], None] | None = None) -> list[StepRecord]:
        """Run until ``steps`` (default: the remaining budget) or convergence.

        On a non-finite loss the model is restored to the last good
        parameters and :class:`TrainingDiverged` carries them.
        """
        steps = self.cfg.total_steps - self.step_count if steps is None else steps
        good = self.model.state()
        for _ in range(steps):
            try:
                rec = self.step()
            except (TrainingDiverged, NonFiniteGradient) as exc:
                self.model.load_state(good)
                raise TrainingDiverged(self.step_count + 1, good) from exc
            good = self.model.state()
            if on_step is not None:
                on_step(rec)
            if stop_on_convergence and self.converged():
                log.info("loss converged at step %d", self.step_count)
                break
        return self.trace

    # ---------------------------------------------------------- persistence

    def state_dict(self) -> dict:
        return {
            "model": self.model.state(),
            "lamb": self.lamb.copy(),
            "slow": {k: v.copy() for k, v in self.slow.items()},
            "rng": self.rng.bit_generator.state,
            "step": self.step_count,
        }

    def load_state_dict(self, state: dict) -> None:
        self.model.load_state(state["model"])
        self.lamb = state["lamb"].copy()
        self.slow = {k: np.array(v, dtype=np.float64) for k, v in state["slow"].items()}
        self.rng.bit_generator.state = state["rng"]
        self.step_count = int(state["step"])

    def save_state(self, path) -> None:
        """Model, optimizer moments, slow weights and RNG state in one ``.npz``.

        Parameters are stored at their own precision so a restored run
        continues bit for bit.
        """
        arrays = {f"model/{k}": v for k, v in self.model.state().items()}
        arrays.update({f"m/{k}": v for k, v in self.lamb.m.items()})
        arrays.update({f"v/{k}": v for k, v in self.lamb.v.items()})
        arrays.update({f"slow/{k}": v for k, v in self.slow.items()})
        meta = {"t": self.lamb.t, "step": self.step_count, "rng": self.rng.bit_generator.state}
        arrays["meta"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    def load_state(self, path) -> None:
        with np.load(path) as z:
            def group(prefix):
                return {k[len(prefix):]: z[k] for k in z.files if k.startswith(prefix)}
            meta = json.loads(bytes(z["meta"]).decode("utf-8"))
            state = {
                "model": group("model/"),
                "lamb": LambState(meta["t"], group("m/"), group("v/")),
                "slow": group("slow/"),
                "rng": meta["rng"],
                "step": meta["step"],
            }
        self.load_state_dict(state)


def write_trace(trace: Sequence[StepRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "lr", "loss"])
        for r in trace:
            w.writerow([r.step, repr(r.lr), repr(r.loss)])


def graph_sampler(g: RatingGraph, n: int, m: int, p_support: float, sampler: str = "neighborhood"):
    def sample(rng: np.random.Generator) -> PredictionContext:
        return training_context(g, n, m, p_support, rng, sampler)
    return sample


def train(g: RatingGraph, split: ScenarioSplit, model: HireModel, cfg: OptimizerConfig,
          n: int = 32, m: int = 32, p_support: float = 0.1, sampler: str = "neighborhood",
          stop_on_convergence: bool = True, on_step=None) -> tuple[HireModel, list[StepRecord]]:
    """Fit ``model`` on contexts drawn from the training side of ``split``."""
    train_graph = split.train_graph(g)
    if train_graph.n_ratings == 0:
        raise ValueError("the training side of the split has no ratings")
    trainer = Trainer(model, cfg, graph_sampler(train_graph, n, m, p_support, sampler))
    trace = trainer.fit(stop_on_convergence=stop_on_convergence, on_step=on_step)
    return model, trace


def config_dict(cfg: OptimizerConfig) -> dict:
    return asdict(cfg)
