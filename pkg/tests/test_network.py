import numpy as np
import pytest

from nethelpers import network_gradient_error, tiny_problem
from affectkit.mtl import (
    BatchTooSmall, HeadGrads, ModelSpec, ShapeMismatch, StaleCache,
    TrainConfig, backward, combined_loss, forward, init_params, softmax_cross_entropy, update_running_stats,
)


class TestInit:
    def test_shapes(self):
        p = init_params(ModelSpec(8, (16,), use_batchnorm=False), 0)
        shapes = {k: v.shape for k, v in p.weights.items() if k.endswith("weight")}
        assert shapes == {"trunk0.weight": (16, 8), "expr.weight": (8, 16), "au.weight": (12, 16),
                          "va.weight": (2, 16)}

    def test_deterministic(self):
        spec = ModelSpec(8, (16, 8))
        assert init_params(spec, 5).to_bytes() == init_params(spec, 5).to_bytes()
        assert init_params(spec, 5).to_bytes() != init_params(spec, 6).to_bytes()

    def test_he_std(self):
        w = init_params(ModelSpec(100, (100,)), 0).weights["trunk0.weight"]
        assert w.size == 10_000
        assert abs(w.std() / np.sqrt(2 / 100) - 1) < 0.05

    def test_bn_defaults(self):
        p = init_params(ModelSpec(4, (3,)), 0)
        assert p.weights["trunk0.gamma"].tolist() == [1.0] * 3
        assert p.weights["trunk0.beta"].tolist() == [0.0] * 3
        assert p.buffers["trunk0.running_mean"].tolist() == [0.0] * 3
        assert p.buffers["trunk0.running_var"].tolist() == [1.0] * 3
        assert all(not p.weights[f"{h}.bias"].any() for h in ("expr", "au", "va"))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ModelSpec(4, ())
        with pytest.raises(ValueError):
            ModelSpec(4, (0,))
        assert ModelSpec(4).head_dims == {"expr": 8, "au": 12, "va": 2}


class TestForward:
    def test_zero_weights(self):
        p = init_params(ModelSpec(5, (4,), use_batchnorm=False), 0)
        p = p.replace_weights({k: np.zeros_like(v) for k, v in p.weights.items()})
        out, _ = forward(p, np.random.default_rng(0).normal(size=(3, 5)), "eval")
        assert not out.expr_logits.any() and not out.au_logits.any() and not out.va_pred.any()

    def test_hand_computation(self):
        p = init_params(ModelSpec(2, (2,), use_batchnorm=False), 0)
        w = {k: np.zeros_like(v) for k, v in p.weights.items()}
        w["trunk0.weight"] = np.array([[1.0, -1.0], [0.5, 2.0]])
        w["trunk0.bias"] = np.array([0.0, -1.0])
        w["va.weight"] = np.array([[1.0, 1.0], [2.0, -1.0]])
        w["va.bias"] = np.array([0.5, 0.0])
        out, _ = forward(p.replace_weights(w), np.array([[1.0, 2.0]]), "eval")
        # z = [1 - 2, 0.5 + 4 - 1] = [-1, 3.5]; relu -> [0, 3.5]
        assert out.va_pred.tolist() == [[0.0 + 3.5 + 0.5, 0.0 - 3.5]]

    def test_eval_independent_of_batch(self):
        p, x, *_ = tiny_problem(True)
        full, _ = forward(p, x, "eval")
        single, _ = forward(p, x[2:3], "eval")
        shuffled, _ = forward(p, np.vstack([x[2:3], x[::-1] * 10]), "eval")
        # matmul kernels may differ by an ulp with batch size, nothing more
        assert np.allclose(full.au_logits[2:3], single.au_logits, rtol=0, atol=1e-13)
        assert np.allclose(shuffled.au_logits[:1], single.au_logits, rtol=0, atol=1e-13)

    def test_errors(self):
        p = init_params(ModelSpec(3, (4,)), 0)
        with pytest.raises(ShapeMismatch):
            forward(p, np.zeros((2, 4)))
        with pytest.raises(BatchTooSmall):
            forward(p, np.zeros((1, 3)), "train")
        forward(p, np.zeros((1, 3)), "eval")

    def test_batchnorm_normalises(self):
        spec = ModelSpec(6, (5,))
        p = init_params(spec, 1)
        x = np.random.default_rng(1).normal(3.0, 4.0, size=(64, 6))
        _, cache = forward(p, x, "train")
        pre = cache.layers[0].pre_act
        assert np.abs(pre.mean(axis=0)).max() < 1e-6
        # population variance; BN eps shifts it by ~eps / var
        assert np.abs(pre.var(axis=0) - 1).max() < 1e-5

    def test_running_stats_update(self):
        p = init_params(ModelSpec(3, (2,)), 0)
        x = np.random.default_rng(2).normal(size=(10, 3))
        _, cache = forward(p, x, "train")
        q = update_running_stats(p, cache, momentum=0.1)
        z = x @ p.weights["trunk0.weight"].T
        assert np.allclose(q.buffers["trunk0.running_mean"], 0.1 * z.mean(axis=0), atol=1e-15)
        assert np.allclose(q.buffers["trunk0.running_var"], 0.9 + 0.1 * z.var(axis=0, ddof=1), atol=1e-15)
        assert p.buffers["trunk0.running_mean"].tolist() == [0.0, 0.0]


class TestBackward:
    @pytest.mark.parametrize("bn", [True, False])
    @pytest.mark.parametrize("kind", ["mse", "bce"])
    def test_finite_differences(self, bn, kind):
        assert network_gradient_error(bn, kind, seed=1) < 1e-5

    def test_zero_head_grads(self):
        p, x, *_ = tiny_problem(True)
        _, cache = forward(p, x, "train")
        grads = backward(p, cache, HeadGrads.zeros(len(x)))
        assert all(not g.any() for g in grads.values())
        assert list(grads) == list(p.weights)

    def test_trunk_grad_matches_uni_model(self):
        # the expression-only loss reaches the trunk through the expression head alone
        p, x, labels, masks, _ = tiny_problem(True)
        cfg_multi = TrainConfig(loss_weights=(1, 0, 0))
        out, cache = forward(p, x, "train")
        g_multi = backward(p, cache, combined_loss(out, labels, masks, cfg_multi).grads)
        clone = p.copy()
        for h in ("au", "va"):
            clone.weights[f"{h}.weight"] = np.zeros_like(clone.weights[f"{h}.weight"])
        out2, cache2 = forward(clone, x, "train")
        _, g = softmax_cross_entropy(out2.expr_logits, labels.expr)
        hg = HeadGrads.zeros(len(x))
        hg.expr[:] = g
        g_uni = backward(clone, cache2, hg)
        for k in ("trunk0.weight", "trunk0.gamma", "trunk0.beta", "expr.weight", "expr.bias"):
            assert np.max(np.abs(g_multi[k] - g_uni[k])) < 1e-12

    def test_stale_cache(self):
        p, x, *_ = tiny_problem(True)
        _, cache = forward(p, x, "train")
        with pytest.raises(StaleCache):
            backward(p, cache, HeadGrads.zeros(len(x) + 1))
        other = init_params(ModelSpec(3, (4, 4)), 0)
        with pytest.raises(StaleCache):
            backward(other, cache, HeadGrads.zeros(len(x)))
        with pytest.raises(StaleCache):
            backward(p, None, HeadGrads.zeros(len(x)))
