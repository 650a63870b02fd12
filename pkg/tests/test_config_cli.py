import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hire.cli import main, subset
from hire.config import ConfigError, RunConfig
from hire.model import load_checkpoint
from hire.synthetic import synthetic_graph, write_movielens

SMALL = ["--n", "8", "--m", "8", "--seed", "3"]
MODEL = ["--blocks", "1", "--heads", "2", "--head-dim", "4", "--feat-dim", "8", "--steps", "3", "--batch", "2"]


class TestRunConfig:
    def test_defaults_validate(self):
        cfg = RunConfig().validate()
        assert cfg.k_list() == (5, 7, 10)
        assert cfg.optimizer_config().base_lr == 1e-3

    @given(st.integers(1, 64), st.floats(0, 1), st.booleans(), st.sampled_from(["none", "pre", "post"]),
           st.floats(1e-6, 1.0), st.text("abcxyz/_.", max_size=12))
    def test_text_round_trip(self, n, support, residual, norm, lr, out):
        cfg = RunConfig(n=n, support=support, residual=residual, norm=norm, lr=lr, out=out)
        assert RunConfig.from_text(cfg.to_text()) == cfg

    @pytest.mark.parametrize("text, match", [("n = 0", "n must"), ("bogus = 1", "unknown key"),
                                             ("lr = fast", "lr"), ("no equals sign", "key = value"),
                                             ("residual = maybe", "residual"), ("k = 5,x", None)])
    def test_bad_text(self, text, match):
        with pytest.raises(ConfigError, match=match):
            RunConfig.from_text(text).validate()

    def test_dashes_and_comments(self):
        cfg = RunConfig.from_text("# note\nhead-dim = 8\n\nmax-users = 10\n")
        assert cfg.head_dim == 8 and cfg.max_users == 10

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            RunConfig.load(tmp_path / "nope.txt")


def test_subset_sizes():
    g = synthetic_graph(30, 25, seed=1)
    s = subset(g, 10, 12, seed=0)
    assert (s.n_users, s.n_items) == (10, 12)
    assert subset(g, 0, 0, 0) is g


# ------------------------------------------------------------------ commands


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    return str(write_movielens(synthetic_graph(60, 60, density=0.2, seed=2), tmp_path_factory.mktemp("ml")))


@pytest.fixture(scope="module")
def trained(data_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["train", "--data", data_dir, "--out", str(out)] + SMALL + MODEL) == 0
    return out


def test_train_writes_artifacts(trained):
    for name in ("config.txt", "model.hire", "trace.csv"):
        assert (trained / name).exists()
    cfg = RunConfig.load(trained / "config.txt")
    assert cfg.blocks == 1 and cfg.steps == 3
    with open(trained / "trace.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 3


def test_same_seed_same_checkpoint(data_dir, trained, tmp_path):
    assert main(["train", "--data", data_dir, "--out", str(tmp_path)] + SMALL + MODEL) == 0
    a, _ = load_checkpoint(trained / "model.hire")
    b, _ = load_checkpoint(tmp_path / "model.hire")
    for k, v in a.state().items():
        np.testing.assert_array_equal(v, b.state()[k])


def test_config_file_and_flag_precedence(data_dir, tmp_path):
    conf = tmp_path / "run.txt"
    conf.write_text("steps = 2\nbatch = 1\nblocks = 1\nheads = 2\nhead_dim = 4\nfeat_dim = 8\nn = 8\nm = 8\n")
    assert main(["train", "--config", str(conf), "--data", data_dir, "--steps", "1", "--out", str(tmp_path)]) == 0
    cfg = RunConfig.load(tmp_path / "config.txt")
    assert cfg.steps == 1 and cfg.batch == 1


def test_eval_with_baseline(data_dir, trained, capsys):
    code = main(["eval", "--checkpoint", str(trained / "model.hire"), "--data", data_dir, "--with-baseline",
                 "--contexts", "4", "--out", str(trained), "--workers", "1"])
    assert code == 0
    assert "HIRE" in capsys.readouterr().out
    rows = list(csv.DictReader(open(trained / "eval_uc.csv")))
    assert [r["method"] for r in rows] == ["HIRE", "Popularity"]
    assert sum(1 for k in rows[0] if "@" in k and not k.endswith("_std")) == 9


def test_baseline_only_eval(data_dir, tmp_path):
    assert main(["eval", "--with-baseline", "--data", data_dir, "--contexts", "3", "--out", str(tmp_path)]
                + SMALL) == 0


def test_dump_attention_counts(data_dir, trained, tmp_path):
    code = main(["dump-attention", "--checkpoint", str(trained / "model.hire"), "--data", data_dir,
                 "--out", str(tmp_path), "--layers", "mbu"])
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "attention" / "manifest.csv")))
    # one block, two heads, one matrix per item column of the 8-item context
    assert len(rows) == 1 * 2 * 8
    assert all(r["row_stochastic"] == "True" for r in rows)


@pytest.mark.parametrize("argv, code", [
    (["train", "--data", "/nonexistent/ml"], 2),
    (["train", "--blocks", "0"], 1),
    (["train", "--support", "1.5"], 1),
    (["eval"], 1),
    (["dump-attention", "--checkpoint", "/nonexistent.hire"], 1),
])
def test_exit_codes(data_dir, tmp_path, argv, code):
    argv = argv + ["--out", str(tmp_path)]
    if "--data" not in argv:
        argv += ["--data", data_dir]
    assert main(argv) == code


def test_checkpoint_arity_mismatch(trained, tmp_path):
    other = write_movielens(synthetic_graph(30, 30, seed=0, user_cards=(3, 4, 2, 5)), tmp_path / "other")
    assert main(["eval", "--checkpoint", str(trained / "model.hire"), "--data", str(other),
                 "--out", str(tmp_path)]) == 1


def test_uic_without_cold_pairs(tmp_path):
    # every user rates the same single item: no rating can have both sides in test
    from hire.data import RatingGraph
    g = RatingGraph([str(u + 1) for u in range(5)], ["1", "2"], np.zeros((5, 4), int), np.zeros((2, 4), int),
                    (7, 21, 2, 10), (5, 18, 30, 40), {(u, 0): 4.0 for u in range(5)}, 5)
    d = write_movielens(g, tmp_path / "ml")
    assert main(["eval", "--with-baseline", "--scenario", "uic", "--data", str(d), "--out", str(tmp_path)]) == 1


def test_unknown_flag_is_a_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["train", "--no-such-flag"])
    assert info.value.code == 2
