import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hire import tensor as T
from hire.model import HireModel, ModelConfig
from hire.sampler import PredictionContext, assign_masks
from hire.tensor import Tensor
from hire.trainer import (LambState, NonFiniteGradient, OptimizerConfig, StepRecord, Trainer, TrainingDiverged,
                          batch_loss, clip_grad_norm, global_norm, lamb_step, lookahead_sync, lr_at, masked_mse,
                          write_trace)


class TestMaskedMse:
    def test_perfect_prediction(self):
        truth = np.array([[1.0, 2.0], [np.nan, 4.0]])
        q = np.array([[True, False], [False, True]])
        assert masked_mse(Tensor(np.nan_to_num(truth)), truth, q).item() == 0.0

    def test_single_cell_error_two(self):
        truth = np.array([[3.0, 1.0]])
        q = np.array([[True, False]])
        assert masked_mse(Tensor([[5.0, 9.0]]), truth, q).item() == 4.0

    def test_outer_mean(self):
        assert batch_loss([Tensor([1.0]), Tensor([3.0])]).item() == 2.0

    def test_empty_query(self):
        with pytest.raises(ValueError):
            masked_mse(Tensor([[1.0]]), np.array([[1.0]]), np.array([[False]]))

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            batch_loss([])

    def test_unmasked_cells_get_no_gradient(self):
        pred = Tensor([[1.0, 2.0]], requires_grad=True)
        with T.Tape() as tape:
            loss = masked_mse(pred, np.array([[2.0, np.nan]]), np.array([[True, False]]))
        tape.backward(loss)
        np.testing.assert_allclose(pred.grad, [[-2.0, 0.0]])


class TestSchedule:
    cfg = OptimizerConfig(total_steps=1000)

    def test_exact_points(self):
        assert lr_at(0, self.cfg) == 1e-3
        assert lr_at(700, self.cfg) == 1e-3
        assert lr_at(1000, self.cfg) == 0.0

    def test_cosine_midpoint(self):
        assert lr_at(850, self.cfg) == pytest.approx(5e-4, rel=1e-12)

    @given(st.integers(1, 5000), st.floats(0.05, 0.95))
    def test_monotone_and_bounded(self, total, flat):
        cfg = OptimizerConfig(total_steps=total, flat_fraction=flat)
        lrs = [lr_at(s, cfg) for s in range(total + 1)]
        assert all(0.0 <= x <= cfg.base_lr for x in lrs)
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))

    def test_config_invariants(self):
        with pytest.raises(ValueError):
            OptimizerConfig(flat_fraction=1.0)
        with pytest.raises(ValueError):
            OptimizerConfig(clip_norm=0.0)


class TestClip:
    def test_norm_ten_becomes_one(self):
        a = Tensor(np.zeros(2), requires_grad=True)
        b = Tensor(np.zeros(1), requires_grad=True)
        a.grad = np.array([6.0, 0.0])
        b.grad = np.array([8.0])
        assert clip_grad_norm([a, b], 1.0) == pytest.approx(10.0)
        assert global_norm([a, b]) == pytest.approx(1.0)
        np.testing.assert_allclose(a.grad, [0.6, 0.0])

    def test_small_norm_untouched(self):
        a = Tensor(np.zeros(2), requires_grad=True)
        a.grad = np.array([0.3, 0.4])
        clip_grad_norm([a], 1.0)
        np.testing.assert_array_equal(a.grad, [0.3, 0.4])

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20))
    def test_post_clip_bound(self, values):
        a = Tensor(np.zeros(len(values)), requires_grad=True)
        a.grad = np.array(values)
        clip_grad_norm([a], 1.0)
        assert global_norm([a]) <= 1.0 + 1e-12


class TestLamb:
    def test_zero_gradient_leaves_params(self):
        w = {"w": np.array([1.0, -2.0])}
        lamb_step(w, {"w": np.zeros(2)}, 1e-3, OptimizerConfig(), LambState.zeros(w))
        np.testing.assert_array_equal(w["w"], [1.0, -2.0])

    def test_deterministic(self):
        def run():
            w = {"w": np.array([0.5, 1.5])}
            state = LambState.zeros(w)
            for g in ([1.0, -1.0], [0.5, 0.2]):
                lamb_step(w, {"w": np.array(g)}, 1e-2, OptimizerConfig(), state)
            return w["w"]
        np.testing.assert_array_equal(run(), run())

    def test_first_step_moves_by_lr_times_norm(self):
        # bias-corrected first step is sign(g) per entry, so ||update|| = sqrt(n)
        w = {"w": np.array([3.0, 4.0])}
        lamb_step(w, {"w": np.array([2.0, -0.5])}, 0.1, OptimizerConfig(), LambState.zeros(w))
        moved = np.linalg.norm(w["w"] - np.array([3.0, 4.0]))
        assert moved == pytest.approx(0.1 * 5.0, rel=1e-5)

    def test_zero_weights_use_unit_trust(self):
        w = {"w": np.zeros(2)}
        trust = lamb_step(w, {"w": np.array([1.0, 1.0])}, 0.1, OptimizerConfig(), LambState.zeros(w))
        assert trust["w"] == 1.0

    def test_trust_is_clamped(self):
        w = {"w": np.array([1e6])}
        trust = lamb_step(w, {"w": np.array([1.0])}, 1e-9, OptimizerConfig(), LambState.zeros(w))
        assert trust["w"] == 10.0

    def test_nan_gradient_aborts(self):
        w = {"w": np.array([1.0])}
        state = LambState.zeros(w)
        with pytest.raises(NonFiniteGradient, match="w"):
            lamb_step(w, {"w": np.array([np.nan])}, 1e-3, OptimizerConfig(), state)
        assert state.t == 0 and w["w"][0] == 1.0

    def test_scalar_toy_converges(self):
        # minimiser of (w - 3)^2 is 3
        cfg = OptimizerConfig(base_lr=0.05, total_steps=500)
        w = {"w": np.array([1.0])}
        state = LambState.zeros(w)
        for step in range(500):
            lamb_step(w, {"w": 2 * (w["w"] - 3.0)}, lr_at(step, cfg), cfg, state)
        assert abs(w["w"][0] - 3.0) < 1e-2


class TestLookahead:
    def test_alpha_one_jumps_to_fast(self):
        fast, slow = {"w": np.array([5.0])}, {"w": np.array([1.0])}
        assert lookahead_sync(fast, slow, 1.0, 6, 6)
        assert slow["w"][0] == 5.0 and fast["w"][0] == 5.0

    def test_alpha_zero_resets_fast(self):
        fast, slow = {"w": np.array([5.0])}, {"w": np.array([1.0])}
        lookahead_sync(fast, slow, 0.0, 6, 12)
        assert fast["w"][0] == 1.0 and slow["w"][0] == 1.0

    def test_half_way(self):
        fast, slow = {"w": np.array([5.0])}, {"w": np.array([1.0])}
        lookahead_sync(fast, slow, 0.5, 6, 6)
        assert fast["w"][0] == 3.0

    def test_sync_only_at_multiples_of_k(self):
        hits = [s for s in range(1, 25) if lookahead_sync({"w": np.ones(1)}, {"w": np.zeros(1)}, 0.5, 6, s)]
        assert hits == [6, 12, 18, 24]


# ---------------------------------------------------------------- trainer


def table_sampler(n=4, m=4, seed=0):
    rng = np.random.default_rng(seed)
    truth = rng.integers(1, 6, size=(n, m)).astype(float)
    ids = np.arange(n)

    def sample(r):
        ctx = PredictionContext(ids, np.arange(m), ids[:, None], np.arange(m)[:, None], truth.copy(),
                                np.ones((n, m), bool), np.zeros((n, m), bool))
        return assign_masks(ctx, 0.3, r)
    return sample


def tiny_model(seed=0):
    return HireModel(ModelConfig((4,), (4,), feat_dim=8, blocks=1, heads=2, head_dim=4, mba_heads=2,
                                 mba_head_dim=4, seed=seed))


def test_trace_is_bitwise_reproducible():
    traces = []
    for _ in range(2):
        tr = Trainer(tiny_model(), OptimizerConfig(total_steps=8, batch_size=2, seed=5), table_sampler())
        tr.fit(stop_on_convergence=False)
        traces.append([(r.lr, r.loss) for r in tr.trace])
    assert traces[0] == traces[1]


def test_save_restore_continues_identically(tmp_path):
    cfg = OptimizerConfig(total_steps=14, batch_size=2, seed=2)
    a = Trainer(tiny_model(), cfg, table_sampler())
    a.fit(7, stop_on_convergence=False)
    a.save_state(tmp_path / "state.npz")
    a.fit(7, stop_on_convergence=False)

    b = Trainer(tiny_model(seed=99), cfg, table_sampler())
    b.load_state(tmp_path / "state.npz")
    b.fit(7, stop_on_convergence=False)
    assert [r.loss for r in a.trace[7:]] == [r.loss for r in b.trace]
    for k, v in a.model.state().items():
        np.testing.assert_array_equal(v, b.model.state()[k])


def test_lookahead_syncs_at_multiples_of_six():
    tr = Trainer(tiny_model(), OptimizerConfig(total_steps=13, batch_size=1), table_sampler())
    tr.fit(stop_on_convergence=False)
    assert tr.sync_steps == [6, 12]
    # right after a sync the fast weights equal the slow copy
    tr2 = Trainer(tiny_model(), OptimizerConfig(total_steps=6, batch_size=1), table_sampler())
    tr2.fit(stop_on_convergence=False)
    for k, v in tr2.arrays().items():
        np.testing.assert_array_equal(v, tr2.slow[k].astype(v.dtype))


def test_divergence_restores_last_good_state():
    model = tiny_model()
    tr = Trainer(model, OptimizerConfig(total_steps=10, batch_size=1), table_sampler())
    seen = {}

    def poison(rec):
        if rec.step == 2:
            seen["good"] = model.state()
            model.dec_w.data[0, 0] = np.nan
    with pytest.raises(TrainingDiverged) as info:
        tr.fit(stop_on_convergence=False, on_step=poison)
    assert info.value.step == 3
    np.testing.assert_array_equal(info.value.state["decoder.w"], seen["good"]["decoder.w"])
    np.testing.assert_array_equal(model.dec_w.data, seen["good"]["decoder.w"])


def test_all_empty_queries_raise():
    def sample(r):
        ctx = table_sampler()(r)
        return assign_masks(ctx, 1.0, r)
    tr = Trainer(tiny_model(), OptimizerConfig(total_steps=2, batch_size=2), sample)
    with pytest.raises(ValueError, match="query"):
        tr.step()


def test_convergence_rule():
    tr = Trainer(tiny_model(), OptimizerConfig(total_steps=10), table_sampler())
    tr.trace = [StepRecord(s, 1e-3, 1.0, 0.0) for s in range(199)]
    assert not tr.converged()
    tr.trace.append(StepRecord(199, 1e-3, 1.0, 0.0))
    assert tr.converged()
    tr.trace = [StepRecord(s, 1e-3, 1.0 - 0.001 * s, 0.0) for s in range(200)]
    assert not tr.converged()


def test_write_trace(tmp_path):
    write_trace([StepRecord(1, 1e-3, 0.5, 2.0)], tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines() == ["step,lr,loss", "1,0.001,0.5"]
