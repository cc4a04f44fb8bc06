"""Dense/batchnorm/dropout networks and their backward passes."""

import numpy as np
import pytest

from retrogan.errors import InvalidStateError, ShapeError
from retrogan.nn import LayerSpec, Network, gradcheck, stable_sigmoid
from retrogan.tensor_math import RngState


def small_net(specs, seed=0):
    return Network(specs, RngState(seed))


def mlp_specs(din=4, h=6, dout=3, rate=0.0, with_bn=False, with_sigmoid=False):
    specs = [
        LayerSpec("dense", in_dim=din, out_dim=h),
        LayerSpec("relu"),
        LayerSpec("dropout", rate=rate),
    ]
    if with_bn:
        specs.append(LayerSpec("batchnorm", in_dim=h, out_dim=h))
    specs.append(LayerSpec("dense", in_dim=h, out_dim=dout))
    if with_sigmoid:
        specs.append(LayerSpec("sigmoid"))
    return specs


class TestStableSigmoid:
    def test_matches_naive_formula(self, rng):
        x = rng.normal(5, 5) * 3.0
        assert np.allclose(stable_sigmoid(x), 1.0 / (1.0 + np.exp(-x)), atol=1e-15)

    def test_extreme_inputs_do_not_overflow(self):
        x = np.array([-800.0, -50.0, 0.0, 50.0, 800.0])
        with np.errstate(over="raise"):
            y = stable_sigmoid(x)
        assert y[0] == 0.0 and y[-1] == 1.0
        assert y[2] == 0.5
        assert np.all((y >= 0.0) & (y <= 1.0))


class TestForward:
    def test_dense_matches_manual_affine(self, rng):
        net = small_net([LayerSpec("dense", in_dim=3, out_dim=2)])
        x = rng.normal(5, 3)
        out, _ = net.forward(x)
        manual = x @ net.layers[0]["w"] + net.layers[0]["b"]
        assert np.allclose(out, manual, atol=1e-15)

    def test_relu_clamps_negatives(self):
        net = small_net([LayerSpec("relu")])
        out, _ = net.forward(np.array([[-2.0, 0.0, 3.0]]))
        assert np.array_equal(out, [[0.0, 0.0, 3.0]])

    def test_wrong_input_width_raises(self, rng):
        net = small_net(mlp_specs(din=4))
        with pytest.raises(ShapeError):
            net.forward(rng.normal(2, 5))

    def test_eval_equals_frozen_without_dropout(self, rng):
        net = small_net(mlp_specs(with_bn=True, with_sigmoid=True))
        x = rng.normal(6, 4)
        out_eval, _ = net.forward(x, mode="eval")
        out_frozen, _ = net.forward(x, mode="frozen")
        assert np.array_equal(out_eval, out_frozen)

    def test_unknown_mode_raises(self, rng):
        net = small_net(mlp_specs())
        with pytest.raises(InvalidStateError):
            net.forward(rng.normal(2, 4), mode="predict")


class TestDropout:
    def test_train_mode_masks_and_rescales(self):
        net = small_net([LayerSpec("dropout", rate=0.4)])
        x = np.ones((200, 50))
        out, _ = net.forward(x, mode="train", rng=RngState(9))
        values = np.unique(out)
        assert np.allclose(sorted(values), [0.0, 1.0 / 0.6], atol=1e-12)
        # Inverted dropout keeps the activation expectation roughly unchanged.
        assert abs(out.mean() - 1.0) < 0.05

    def test_eval_mode_is_identity(self, rng):
        net = small_net([LayerSpec("dropout", rate=0.4)])
        x = rng.normal(5, 5)
        for mode in ("eval", "frozen"):
            out, _ = net.forward(x, mode=mode)
            assert np.array_equal(out, x)

    def test_train_mode_requires_rng(self, rng):
        net = small_net([LayerSpec("dropout", rate=0.4)])
        with pytest.raises(InvalidStateError):
            net.forward(rng.normal(2, 3), mode="train")

    def test_zero_rate_needs_no_rng(self, rng):
        net = small_net([LayerSpec("dropout", rate=0.0)])
        x = rng.normal(2, 3)
        out, _ = net.forward(x, mode="train")
        assert np.array_equal(out, x)


class TestBatchNorm:
    def test_train_mode_standardizes_batch(self, rng):
        net = small_net([LayerSpec("batchnorm", in_dim=5, out_dim=5)])
        x = rng.normal(64, 5) * 3.0 + 7.0
        out, _ = net.forward(x, mode="train")
        # gamma=1, beta=0 at init, so outputs are the standardized batch.
        assert np.allclose(out.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(out.var(axis=0), 1.0, atol=1e-3)

    def test_running_stats_update_rule(self, rng):
        net = small_net([LayerSpec("batchnorm", in_dim=4, out_dim=4)])
        mom = net.bn_momentum
        x1 = rng.normal(32, 4)
        x2 = rng.normal(32, 4) + 5.0
        expected_mean = np.zeros(4)
        expected_var = np.ones(4)
        for x in (x1, x2):
            net.forward(x, mode="train")
            expected_mean = mom * expected_mean + (1.0 - mom) * x.mean(axis=0)
            expected_var = mom * expected_var + (1.0 - mom) * x.var(axis=0)
        layer = net.layers[0]
        assert np.allclose(layer["running_mean"], expected_mean, atol=1e-12)
        assert np.allclose(layer["running_var"], expected_var, atol=1e-12)

    def test_frozen_mode_uses_running_stats(self, rng):
        net = small_net([LayerSpec("batchnorm", in_dim=4, out_dim=4)])
        x = rng.normal(16, 4)
        net.forward(x, mode="train")
        layer = net.layers[0]
        manual = (x - layer["running_mean"]) / np.sqrt(layer["running_var"] + net.bn_eps)
        out, _ = net.forward(x, mode="frozen")
        assert np.allclose(out, manual, atol=1e-12)

    def test_frozen_mode_leaves_stats_untouched(self, rng):
        net = small_net([LayerSpec("batchnorm", in_dim=4, out_dim=4)])
        layer = net.layers[0]
        before = (layer["running_mean"].copy(), layer["running_var"].copy())
        net.forward(rng.normal(16, 4), mode="frozen")
        net.forward(rng.normal(16, 4), mode="eval")
        assert np.array_equal(layer["running_mean"], before[0])
        assert np.array_equal(layer["running_var"], before[1])


class TestBackward:
    def test_gradcheck_plain_mlp(self, rng):
        net = small_net(mlp_specs())
        assert gradcheck(net, rng.normal(5, 4)) < 1e-6

    def test_gradcheck_with_batchnorm_frozen(self, rng):
        net = small_net(mlp_specs(with_bn=True))
        net.forward(rng.normal(32, 4), mode="train")  # make running stats non-trivial
        assert gradcheck(net, rng.normal(5, 4)) < 1e-6

    def test_gradcheck_with_sigmoid_head(self, rng):
        net = small_net(mlp_specs(with_bn=True, with_sigmoid=True))
        assert gradcheck(net, rng.normal(5, 4)) < 1e-6

    def test_gradcheck_train_mode_batchnorm(self, rng):
        # Batch statistics depend on the input, so the train-mode backward
        # differs from the frozen one; check it against finite differences.
        net = small_net([
            LayerSpec("dense", in_dim=4, out_dim=6),
            LayerSpec("batchnorm", in_dim=6, out_dim=6),
            LayerSpec("dense", in_dim=6, out_dim=2),
        ])
        x = rng.normal(8, 4)
        weights = np.cos(np.arange(16, dtype=float)).reshape(8, 2)

        def loss_value():
            out, _ = net.forward(x, mode="train")
            return float((out * weights).sum())

        out, trace = net.forward(x, mode="train")
        grads, _ = net.backward(trace, weights)
        flat_analytic = np.concatenate([g.ravel() for g in net.flatten_grads(grads)])
        arrays = net.trainable_arrays()
        flat_numeric = np.empty_like(flat_analytic)
        pos = 0
        eps = 1e-6
        for arr in arrays:
            flat = arr.ravel()
            for i in range(flat.size):
                keep = flat[i]
                flat[i] = keep + eps
                up = loss_value()
                flat[i] = keep - eps
                down = loss_value()
                flat[i] = keep
                flat_numeric[pos] = (up - down) / (2.0 * eps)
                pos += 1
        # The bias of a dense layer feeding train-mode batchnorm has an exactly
        # zero gradient (the batch mean absorbs it), so floor the denominator
        # well above rounding noise.
        denom = np.maximum(np.abs(flat_analytic), np.maximum(np.abs(flat_numeric), 1e-3))
        assert np.max(np.abs(flat_analytic - flat_numeric) / denom) < 1e-6

    def test_input_gradient_matches_finite_differences(self, rng):
        net = small_net(mlp_specs(with_bn=True, with_sigmoid=True))
        x = rng.normal(3, 4)
        weights = np.sin(np.arange(9, dtype=float)).reshape(3, 3)
        out, trace = net.forward(x, mode="frozen")
        _, input_grad = net.backward(trace, weights)
        eps = 1e-6
        numeric = np.empty_like(x)
        for i in range(x.shape[0]):
            for j in range(x.shape[1]):
                keep = x[i, j]
                x[i, j] = keep + eps
                up = float((net.forward(x, mode="frozen")[0] * weights).sum())
                x[i, j] = keep - eps
                down = float((net.forward(x, mode="frozen")[0] * weights).sum())
                x[i, j] = keep
                numeric[i, j] = (up - down) / (2.0 * eps)
        denom = np.maximum(np.abs(input_grad), np.maximum(np.abs(numeric), 1e-8))
        assert np.max(np.abs(input_grad - numeric) / denom) < 1e-6

    def test_dropout_backward_reuses_forward_mask(self):
        net = small_net([LayerSpec("dropout", rate=0.5)])
        x = np.ones((20, 10))
        out, trace = net.forward(x, mode="train", rng=RngState(3))
        _, input_grad = net.backward(trace, np.ones_like(out))
        # Gradient passes exactly where activations survived, with the same scale.
        assert np.array_equal(input_grad, out)

    def test_backward_rejects_eval_trace(self, rng):
        net = small_net(mlp_specs())
        out, trace = net.forward(rng.normal(2, 4), mode="eval")
        with pytest.raises(InvalidStateError):
            net.backward(trace, np.ones_like(out))


class TestBookkeeping:
    def test_parameter_count_formula(self):
        net = small_net(mlp_specs(din=4, h=6, dout=3, with_bn=True))
        # dense 4->6: 30, batchnorm(6): 12, dense 6->3: 21.
        assert net.parameter_count() == 30 + 12 + 21

    def test_clone_is_deep(self, rng):
        net = small_net(mlp_specs(with_bn=True))
        twin = net.clone()
        x = rng.normal(4, 4)
        assert np.array_equal(net.forward(x)[0], twin.forward(x)[0])
        net.layers[0]["w"] += 1.0
        assert not np.array_equal(net.forward(x)[0], twin.forward(x)[0])

    def test_state_items_cover_all_arrays(self):
        net = small_net(mlp_specs(with_bn=True))
        keys = [(idx, name) for idx, name, _ in net.state_items()]
        assert len(keys) == len(set(keys))
        total = sum(a.size for _, _, a in net.state_items())
        # Trainable parameters plus the two running-stat vectors.
        assert total == net.parameter_count() + 12

    def test_init_scales_follow_fan_in(self):
        # He initialization ahead of a relu, Xavier-style otherwise.
        rng_net = small_net(
            [LayerSpec("dense", in_dim=400, out_dim=300), LayerSpec("relu"),
             LayerSpec("dense", in_dim=300, out_dim=200)],
            seed=5,
        )
        w0 = rng_net.layers[0]["w"]
        w1 = rng_net.layers[2]["w"]
        assert abs(w0.std() - np.sqrt(2.0 / 400)) < 0.005
        assert abs(w1.std() - np.sqrt(1.0 / 300)) < 0.005
        assert np.array_equal(rng_net.layers[0]["b"], np.zeros(300))


class TestGradcheckHelper:
    def test_reports_large_error_for_corrupted_gradients(self, rng):
        net = small_net(mlp_specs())

        original = net.backward

        def broken(trace, upstream):
            grads, input_grad = original(trace, upstream)
            grads[0]["w"] = grads[0]["w"] * 1.5
            return grads, input_grad

        net.backward = broken
        assert gradcheck(net, rng.normal(5, 4)) > 1e-2

    def test_subsampled_coordinates(self, rng):
        net = small_net(mlp_specs(h=12))
        err = gradcheck(net, rng.normal(4, 4), coords_per_param=3, rng=RngState(0))
        assert err < 1e-6
