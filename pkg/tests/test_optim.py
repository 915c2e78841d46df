import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from affectkit.mtl import (
    AdamState, PlateauState, Plateau, SgdState, TrainConfig, adam_step, scheduler_step, sgd_step,
)


def scalar(x):
    return {"p": np.array([float(x)])}


class TestSgd:
    def test_vanilla(self):
        p, _ = sgd_step(scalar(0), scalar(1), TrainConfig(optimizer="sgd", learning_rate=0.1), SgdState())
        assert p["p"].tolist() == [-0.1]

    def test_zero_gradient(self):
        cfg = TrainConfig(optimizer="sgd", learning_rate=0.1, momentum=0.9)
        p, s = sgd_step(scalar(2), scalar(0), cfg, SgdState())
        p, s = sgd_step(p, scalar(0), cfg, s)
        assert p["p"].tolist() == [2.0]

    def test_momentum_recurrence(self):
        cfg = TrainConfig(optimizer="sgd", learning_rate=0.05, momentum=0.9)
        g1, g2 = 0.7, -0.3
        p, s = sgd_step(scalar(1.0), scalar(g1), cfg, SgdState())
        p, s = sgd_step(p, scalar(g2), cfg, s)
        v1 = g1
        v2 = 0.9 * v1 + g2
        expected = 1.0 - 0.05 * v1 - 0.05 * v2
        assert abs(p["p"][0] - expected) <= 1e-15
        assert abs(s.velocity["p"][0] - v2) <= 1e-15

    def test_inputs_not_mutated(self):
        params = scalar(1.0)
        sgd_step(params, scalar(1.0), TrainConfig(optimizer="sgd"), SgdState())
        assert params["p"].tolist() == [1.0]


def reference_adam(p, grad_fn, steps, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    out = []
    for t in range(1, steps + 1):
        g = grad_fn(p)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p = p - lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        out.append(p)
    return out


class TestAdam:
    def test_first_step(self):
        p, s = adam_step(scalar(0), scalar(1), TrainConfig(learning_rate=1e-3), AdamState())
        assert p["p"][0] == pytest.approx(-1e-3, rel=1e-7)
        assert s.t == 1

    def test_zero_gradient(self):
        cfg = TrainConfig()
        p, s = scalar(0.5), AdamState()
        for _ in range(5):
            p, s = adam_step(p, scalar(0), cfg, s)
        assert p["p"].tolist() == [0.5]

    def test_matches_scalar_reference(self):
        cfg = TrainConfig(learning_rate=0.05)
        expected = reference_adam(1.0, lambda x: 2 * x, 10, lr=0.05)
        p, s = scalar(1.0), AdamState()
        for e in expected:
            p, s = adam_step(p, {"p": 2 * p["p"]}, cfg, s)
            assert abs(p["p"][0] - e) <= 1e-12

    def test_quadratic_reduction(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(6, 6))
        hess = a @ a.T + np.eye(6)
        target = rng.normal(size=6)

        def loss(x):
            d = x - target
            return 0.5 * d @ hess @ d

        cfg = TrainConfig(learning_rate=0.1)
        p, s = {"x": np.zeros(6)}, AdamState()
        start = loss(p["x"])
        for _ in range(200):
            p, s = adam_step(p, {"x": hess @ (p["x"] - target)}, cfg, s)
        assert loss(p["x"]) <= 0.01 * start


def run_schedule(losses, lr=0.01, **kw):
    state = PlateauState(lr, Plateau(**kw))
    out = []
    for loss in losses:
        state, lr = scheduler_step(state, loss)
        out.append(lr)
    return out


class TestScheduler:
    def test_improving(self):
        assert run_schedule([1.0, 0.9, 0.8], patience=2) == [0.01, 0.01, 0.01]

    def test_plateau(self):
        lrs = run_schedule([1.0, 1.1, 1.2], lr=0.01, patience=2, factor=0.1)
        assert lrs[:2] == [0.01, 0.01]
        assert lrs[2] == pytest.approx(0.001, rel=1e-15)

    def test_min_lr_clamp(self):
        lrs = run_schedule([1.0] + [2.0] * 10, lr=1e-5, patience=1, factor=0.1, min_lr=1e-6)
        assert lrs[-1] == 1e-6 and min(lrs) == 1e-6

    def test_counter_resets_after_cut(self):
        lrs = run_schedule([1.0, 1.0, 1.0, 1.0, 1.0], lr=1.0, patience=2, factor=0.5)
        assert lrs == [1.0, 1.0, 0.5, 0.5, 0.25]

    def test_equal_loss_is_not_improvement(self):
        assert run_schedule([1.0, 1.0, 1.0], lr=1.0, patience=2, factor=0.5)[-1] == 0.5

    def test_improvement_resets_counter(self):
        assert run_schedule([1.0, 1.1, 0.9, 1.0, 0.8], lr=1.0, patience=2, factor=0.5) == [1.0] * 5

    def test_invalid_settings(self):
        with pytest.raises(ValueError):
            Plateau(factor=1.0)
        with pytest.raises(ValueError):
            Plateau(patience=0)

    @given(st.lists(st.floats(0, 10), max_size=40), st.integers(1, 4), st.floats(0.05, 0.95))
    def test_lr_never_increases_nor_drops_below_min(self, losses, patience, factor):
        lrs = run_schedule(losses, lr=0.1, patience=patience, factor=factor, min_lr=1e-4)
        assert all(b <= a for a, b in zip([0.1] + lrs, lrs))
        assert all(x >= 1e-4 for x in lrs)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(loss_weights=(0, 0, 0))
    with pytest.raises(ValueError):
        TrainConfig(loss_weights=(1, -1, 0))
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")
    with pytest.raises(ValueError):
        TrainConfig(expr_class_weights=(1.0,) * 7)
    cfg = TrainConfig(scheduler=Plateau(), expr_class_weights=(1.0,) * 8)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
