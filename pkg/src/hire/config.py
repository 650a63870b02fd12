"""Run configuration stored as flat ``key = value`` text."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .model import NORMS, ModelConfig
from .trainer import OptimizerConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    data: str = ""
    format: str = "movielens"
    scenario: str = "uc"
    max_users: int = 0
    max_items: int = 0
    n: int = 32
    m: int = 32
    blocks: int = 3
    heads: int = 8
    head_dim: int = 16
    feat_dim: int = 16
    mba_heads: int = 4
    mba_head_dim: int = 4
    residual: bool = True
    norm: str = "pre"
    support: float = 0.1
    lr: float = 1e-3
    steps: int = 3000
    batch: int = 4
    seed: int = 0
    workers: int = 0
    out: str = "runs/hire"
    sampler: str = "neighborhood"
    contexts: int = 50
    k: str = "5,7,10"
    threshold: float = 0.0
    train_ratio: float = 0.8
    test_ratio: float = 0.2
    csv_user: str = "user"
    csv_item: str = "item"
    csv_rating: str = "rating"
    csv_user_attrs: str = ""
    csv_item_attrs: str = ""

    def validate(self) -> "RunConfig":
        if self.format not in ("movielens", "csv"):
            raise ConfigError(f"format must be movielens or csv, got {self.format!r}")
        if self.scenario not in ("uc", "ic", "uic", "warm"):
            raise ConfigError(f"scenario must be uc, ic, uic or warm, got {self.scenario!r}")
        if self.sampler not in ("neighborhood", "random", "featsim"):
            raise ConfigError(f"unknown sampler {self.sampler!r}")
        if self.norm not in NORMS:
            raise ConfigError(f"norm must be one of {NORMS}")
        for name in ("n", "m", "blocks", "heads", "head_dim", "feat_dim", "mba_heads", "mba_head_dim",
                     "steps", "batch", "contexts"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.support <= 1.0:
            raise ConfigError("support must lie in [0, 1]")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if min(self.max_users, self.max_items, self.workers) < 0:
            raise ConfigError("max_users, max_items and workers must be >= 0")
        if self.train_ratio < 0 or self.test_ratio < 0 or self.train_ratio + self.test_ratio > 1 + 1e-9:
            raise ConfigError("train_ratio + test_ratio must not exceed 1")
        self.k_list()
        return self

    def k_list(self) -> tuple[int, ...]:
        try:
            ks = tuple(int(x) for x in self.k.split(",") if x.strip())
        except ValueError:
            raise ConfigError(f"k must be a comma-separated list of integers, got {self.k!r}") from None
        if not ks or min(ks) < 1:
            raise ConfigError("k values must be >= 1")
        return ks

    def n_workers(self) -> int:
        return self.workers or (os.cpu_count() or 1)

    def model_config(self, user_cards, item_cards, r_max: int) -> ModelConfig:
        return ModelConfig(tuple(user_cards), tuple(item_cards), r_max=r_max, feat_dim=self.feat_dim,
                           blocks=self.blocks, heads=self.heads, head_dim=self.head_dim,
                           mba_heads=self.mba_heads, mba_head_dim=self.mba_head_dim,
                           residual=self.residual, norm=self.norm, seed=self.seed)

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(base_lr=self.lr, total_steps=self.steps, batch_size=self.batch, seed=self.seed)

    # --------------------------------------------------------------- text I/O

    def to_text(self) -> str:
        lines = ["# resolved run configuration"]
        for key, value in asdict(self).items():
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        values = asdict(base or cls())
        types = {f.name: type(values[f.name]) for f in fields(cls)}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            values[key] = parse_value(types[key], value, key)
        return cls(**values)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path, base: "RunConfig | None" = None) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_text(text, base)


def parse_value(kind: type, value: str, key: str = "value"):
    try:
        if kind is bool:
            low = value.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        return kind(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {value!r} as {kind.__name__}") from None
