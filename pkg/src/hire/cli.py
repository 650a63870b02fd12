"""Command line: ``hire train``, ``hire eval`` and ``hire dump-attention``.

Settings are resolved as defaults, then ``--config FILE`` (``key = value``
lines), then explicit flags. Exit codes: 1 configuration error, 2 data
error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .data import CsvSchema, DataError, RatingGraph, SplitError, make_split, parse_csv, parse_movielens
from .evaluation import EvaluationError, ModelPredictor, PopularityPredictor, evaluate, format_csv, format_table
from .model import HireModel, load_checkpoint, save_checkpoint
from .sampler import SAMPLERS, SamplerError, assign_masks
from .trainer import TrainingDiverged, Trainer, graph_sampler, write_trace

log = logging.getLogger("hire")

EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 1, 2, 3


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# flag name -> RunConfig field
FLAGS = {
    "data": str, "format": str, "scenario": str, "n": int, "m": int, "blocks": int, "heads": int,
    "head_dim": int, "feat_dim": int, "support": float, "lr": float, "steps": int, "batch": int,
    "seed": int, "workers": int, "out": str, "sampler": str, "max_users": int, "max_items": int,
    "contexts": int, "k": str, "threshold": float, "norm": str,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hire", description="Cold-start rating prediction with HIRE.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value file; explicit flags override it")
        p.add_argument("--data", help="dataset directory (movielens) or CSV file")
        p.add_argument("--format", choices=["movielens", "csv"])
        p.add_argument("--scenario", choices=["uc", "ic", "uic", "warm"])
        p.add_argument("--max-users", type=int, help="random user subset size (0 = all)")
        p.add_argument("--max-items", type=int, help="random item subset size (0 = all)")
        p.add_argument("--n", type=int, help="users per context")
        p.add_argument("--m", type=int, help="items per context")
        p.add_argument("--support", type=float, help="fraction of known ratings shown as support")
        p.add_argument("--sampler", choices=sorted(SAMPLERS))
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int, help="evaluation threads (0 = all cores)")
        p.add_argument("--out", help="output directory")

    t = sub.add_parser("train", help="train a model and write a checkpoint")
    common(t)
    t.add_argument("--blocks", type=int)
    t.add_argument("--heads", type=int)
    t.add_argument("--head-dim", type=int)
    t.add_argument("--feat-dim", type=int)
    t.add_argument("--norm", choices=["none", "pre", "post"])
    t.add_argument("--bare", action="store_true", help="no residuals or normalisation")
    t.add_argument("--lr", type=float)
    t.add_argument("--steps", type=int)
    t.add_argument("--batch", type=int)

    e = sub.add_parser("eval", help="ranking metrics on cold-start test contexts")
    common(e)
    e.add_argument("--checkpoint", help="trained model (omit for baseline only)")
    e.add_argument("--with-baseline", action="store_true", help="add the Popularity row")
    e.add_argument("--contexts", type=int, help="number of test contexts")
    e.add_argument("--k", help="comma-separated cut-offs, default 5,7,10")
    e.add_argument("--threshold", type=float, help="relevance threshold (default ceil(0.8 r_max))")

    d = sub.add_parser("dump-attention", help="write attention matrices of one context as CSV")
    common(d)
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--target", help="USER:ITEM ids seeding the context (default: random rating)")
    d.add_argument("--layers", default="mbu,mbi,mba", help="comma-separated subset of mbu,mbi,mba")
    return parser


def resolve_config(args, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    if getattr(args, "config", None):
        cfg = RunConfig.load(args.config, cfg)
    for name in FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    if getattr(args, "bare", False):
        cfg.residual = False
        cfg.norm = "none"
    return cfg.validate()


# ------------------------------------------------------------------- data


def load_dataset(cfg: RunConfig) -> RatingGraph:
    if not cfg.data:
        raise CliError(EXIT_DATA, "no dataset given (use --data)")
    path = Path(cfg.data)
    if not path.exists():
        raise CliError(EXIT_DATA, f"dataset not found: {path}")
    if cfg.format == "movielens":
        g = parse_movielens(path)
    else:
        split = lambda s: tuple(x.strip() for x in s.split(",") if x.strip())  # noqa: E731
        g = parse_csv(path, CsvSchema(cfg.csv_user, cfg.csv_item, cfg.csv_rating,
                                      split(cfg.csv_user_attrs), split(cfg.csv_item_attrs)))
    return subset(g, cfg.max_users, cfg.max_items, cfg.seed)


def subset(g: RatingGraph, max_users: int, max_items: int, seed: int) -> RatingGraph:
    """Uniform random users and items (sorted by index); 0 keeps everything."""
    if not max_users and not max_items:
        return g
    rng = np.random.default_rng([seed, 0x5EB5])
    users = np.arange(g.n_users)
    items = np.arange(g.n_items)
    if max_users and max_users < g.n_users:
        users = np.sort(rng.choice(g.n_users, size=max_users, replace=False))
    if max_items and max_items < g.n_items:
        items = np.sort(rng.choice(g.n_items, size=max_items, replace=False))
    return g.subgraph(users.tolist(), items.tolist())


def check_compatible(model: HireModel, g: RatingGraph) -> None:
    c = model.config
    if c.user_cards != tuple(g.user_cards) or c.item_cards != tuple(g.item_cards) or c.r_max != g.r_max:
        raise CliError(EXIT_CONFIG,
                       f"checkpoint expects user slots {c.user_cards}, item slots {c.item_cards}, r_max {c.r_max}; "
                       f"dataset has {tuple(g.user_cards)}, {tuple(g.item_cards)}, {g.r_max}")


def checkpoint_config(path) -> tuple[HireModel, RunConfig]:
    try:
        model, extra = load_checkpoint(path)
    except OSError as exc:
        raise CliError(EXIT_CONFIG, f"cannot read checkpoint {path}: {exc.strerror}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(EXIT_CONFIG, f"bad checkpoint {path}: {exc}") from None
    base = RunConfig.from_text(extra["run"]) if "run" in extra else RunConfig()
    return model, base


# --------------------------------------------------------------- commands


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    out = Path(cfg.out)
    g = load_dataset(cfg)
    split = make_split(g, cfg.scenario, (cfg.train_ratio, cfg.test_ratio), seed=cfg.seed)
    train_graph = split.train_graph(g)
    if train_graph.n_ratings == 0:
        raise CliError(EXIT_DATA, "the training side of the split has no ratings")
    model = HireModel(cfg.model_config(g.user_cards, g.item_cards, g.r_max))
    trainer = Trainer(model, cfg.optimizer_config(),
                      graph_sampler(train_graph, cfg.n, cfg.m, cfg.support, cfg.sampler))
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.txt")
    log.info("training on %d ratings (%d users, %d items), %d parameters",
             train_graph.n_ratings, g.n_users, g.n_items, model.num_parameters())
    start = time.perf_counter()

    def report(rec):
        if rec.step % 100 == 0 or rec.step == cfg.steps:
            log.info("step %d  lr %.2e  loss %.4f  (%.0fs)", rec.step, rec.lr, rec.loss, time.perf_counter() - start)

    try:
        trainer.fit(on_step=report)
    except TrainingDiverged as exc:
        save_checkpoint(model, out / "last_good.hire", {"run": cfg.to_text(), "step": exc.step})
        write_trace(trainer.trace, out / "trace.csv")
        raise CliError(EXIT_DIVERGED, f"training diverged at step {exc.step}; last good state in "
                                      f"{out / 'last_good.hire'}") from None
    save_checkpoint(model, out / "model.hire", {"run": cfg.to_text(), "step": trainer.step_count})
    write_trace(trainer.trace, out / "trace.csv")
    print(f"trained {trainer.step_count} steps, final loss {trainer.trace[-1].loss:.4f}; wrote {out / 'model.hire'}")
    return 0


def cmd_eval(args) -> int:
    model = None
    base = None
    if args.checkpoint:
        model, base = checkpoint_config(args.checkpoint)
    elif not args.with_baseline:
        raise CliError(EXIT_CONFIG, "nothing to evaluate: give --checkpoint and/or --with-baseline")
    cfg = resolve_config(args, base)
    g = load_dataset(cfg)
    if model is not None:
        check_compatible(model, g)
    split = make_split(g, cfg.scenario, (cfg.train_ratio, cfg.test_ratio), seed=cfg.seed)
    predictors = []
    if model is not None:
        predictors.append(ModelPredictor(model))
    if args.with_baseline:
        predictors.append(PopularityPredictor(split.visible_graph(g)))
    threshold = cfg.threshold or None
    reports = [evaluate(p, g, split, cfg.k_list(), cfg.contexts, seed=cfg.seed, n=cfg.n, m=cfg.m,
                        p_support=cfg.support, sampler=cfg.sampler, threshold=threshold,
                        workers=cfg.n_workers()) for p in predictors]
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    table = format_table(reports)
    (out / f"eval_{cfg.scenario}.txt").write_text(table + "\n", encoding="utf-8")
    (out / f"eval_{cfg.scenario}.csv").write_text(format_csv(reports), encoding="utf-8")
    print(table)
    return 0


def cmd_dump_attention(args) -> int:
    model, base = checkpoint_config(args.checkpoint)
    cfg = resolve_config(args, base)
    layers = [x.strip() for x in args.layers.split(",") if x.strip()]
    if not layers or any(x not in ("mbu", "mbi", "mba") for x in layers):
        raise CliError(EXIT_CONFIG, f"--layers must name mbu, mbi and/or mba, got {args.layers!r}")
    g = load_dataset(cfg)
    check_compatible(model, g)
    rng = np.random.default_rng(cfg.seed)
    if args.target:
        try:
            uid, iid = args.target.split(":", 1)
            seed_pair = (g.user_ids.index(uid), g.item_ids.index(iid))
        except ValueError:
            raise CliError(EXIT_CONFIG, f"--target {args.target!r}: expected USER:ITEM ids present in the data") from None
    else:
        keys = g.rating_keys
        if not keys:
            raise CliError(EXIT_DATA, "dataset has no ratings")
        seed_pair = keys[int(rng.integers(len(keys)))]
    ctx = assign_masks(SAMPLERS[cfg.sampler](g, [seed_pair], cfg.n, cfg.m, rng), cfg.support, rng)
    out = Path(cfg.out) / "attention"
    out.mkdir(parents=True, exist_ok=True)
    rows = write_attention(model.dump_attention(ctx), ctx, out, layers)
    ok = sum(r["row_stochastic"] for r in rows)
    print(f"wrote {len(rows)} matrices to {out} ({ok} row-stochastic)")
    return 0


def _slices(layer: str, weights: np.ndarray, ctx):
    """Yield (head, slice label, matrix) for every attention matrix of a layer."""
    if layer == "mbu":  # [m, heads, n, n], one matrix per item column
        for j in range(weights.shape[0]):
            for h in range(weights.shape[1]):
                yield h, f"item{ctx.item_ids[j]}", weights[j, h]
    elif layer == "mbi":  # [n, heads, m, m], one per user row
        for a in range(weights.shape[0]):
            for h in range(weights.shape[1]):
                yield h, f"user{ctx.user_ids[a]}", weights[a, h]
    else:  # [n, m, heads, h, h], one per cell
        for a in range(weights.shape[0]):
            for j in range(weights.shape[1]):
                for h in range(weights.shape[2]):
                    yield h, f"user{ctx.user_ids[a]}_item{ctx.item_ids[j]}", weights[a, j, h]


def write_attention(record: list[dict], ctx, out: Path, layers, tol: float = 1e-5) -> list[dict]:
    """One CSV per (block, layer, head, slice) plus ``manifest.csv``."""
    manifest = []
    for entry in record:
        layer = entry["layer"]
        if layer not in layers:
            continue
        for head, label, mat in _slices(layer, entry["weights"], ctx):
            name = f"b{entry['block']}_{layer}_h{head}_{label}.csv"
            np.savetxt(out / name, mat, delimiter=",", fmt="%.8g")
            dev = float(np.max(np.abs(mat.sum(axis=1) - 1.0)))
            manifest.append({"file": name, "block": entry["block"], "layer": layer, "head": head,
                             "slice": label, "rows": mat.shape[0], "cols": mat.shape[1],
                             "max_row_sum_error": f"{dev:.3g}", "row_stochastic": dev <= tol})
    with open(out / "manifest.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["file", "block", "layer", "head", "slice", "rows", "cols",
                                           "max_row_sum_error", "row_stochastic"])
        w.writeheader()
        w.writerows(manifest)
    return manifest


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "dump-attention": cmd_dump_attention}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"hire: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, SplitError, EvaluationError) as exc:
        print(f"hire: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, SamplerError) as exc:
        print(f"hire: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:  # model configuration, e.g. invalid head geometry
        print(f"hire: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
