import math

import numpy as np
import pytest

from helpers import max_rel_error, numeric_grad
from qser import layers as L
from qser.errors import ConfigError, DataError, InputError, NumericsError, ShapeError
from qser.training import (
    QCNN,
    AdamState,
    ModelSpec,
    TrainConfig,
    count_parameters,
    cross_entropy,
    evaluate_predictions,
    glorot_uniform,
    init_weights,
    adam_step,
    train_arrays,
)

MICRO = ModelSpec(n_classes=2, height=10, width=12, conv_channels=(3, 4))


def pure_images(rng, n, h, w, c=1):
    x = np.zeros((n, h, w, c, 4))
    x[..., 1:] = rng.random((n, h, w, c, 3))
    return x


# -- initialisation -----------------------------------------------------------


def test_init_is_seeded_and_scales_positive():
    a, b = init_weights(ModelSpec(), 3), init_weights(ModelSpec(), 3)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    c = init_weights(ModelSpec(), 4)
    assert not np.array_equal(a["conv1.angle"], c["conv1.angle"])
    for name in ("conv1.scale", "conv2.scale"):
        assert np.all(a[name] > 0)
    assert np.all(np.abs(a["conv1.angle"]) <= math.pi)
    assert not a["dense.bias"].any()


@pytest.mark.parametrize("mode", ["mean", "glorot"])
def test_scale_init_bounds(mode):
    spec = ModelSpec(scale_init=mode)
    p = init_weights(spec, 0)
    fan_in, fan_out = 32 * 9, 64 * 9
    limit = 2 / fan_in if mode == "mean" else math.sqrt(6 / (fan_in + fan_out))
    assert p["conv2.scale"].max() <= limit


def test_glorot_std():
    w = glorot_uniform(np.random.default_rng(0), 1000, 1000)
    assert abs(w.std() - math.sqrt(2 / 2000)) < 0.1 * math.sqrt(2 / 2000)


def test_glorot_scale_bound_saturates_second_conv():
    # every scale positive and the gray component preserved: outputs exceed 1 almost everywhere
    rng = np.random.default_rng(0)
    params = init_weights(ModelSpec(scale_init="glorot"), 0)
    x = pure_images(rng, 1, 50, 75)
    y, _ = L.qconv2d_forward(x, L.QConvLayer(params["conv1.scale"], params["conv1.angle"]))
    y, _ = L.qmaxpool(L.qrelu(y)[0])
    y, _ = L.qconv2d_forward(y, L.QConvLayer(params["conv2.scale"], params["conv2.angle"]))
    assert np.mean(y[..., 1:] > 1.0) > 0.99

    mean = init_weights(ModelSpec(), 0)
    y, _ = L.qconv2d_forward(x, L.QConvLayer(mean["conv1.scale"], mean["conv1.angle"]))
    y, _ = L.qmaxpool(L.qrelu(y)[0])
    y, _ = L.qconv2d_forward(y, L.QConvLayer(mean["conv2.scale"], mean["conv2.angle"]))
    assert np.mean(y[..., 1:] > 1.0) < 0.5


def test_spec_validation():
    with pytest.raises(ConfigError):
        ModelSpec(height=4, width=4)
    with pytest.raises(ConfigError):
        ModelSpec(pool_after=(True,))
    with pytest.raises(ConfigError):
        ModelSpec(scale_init="he")
    with pytest.raises(ConfigError):
        TrainConfig(dropout_p=1.0)
    with pytest.raises(ShapeError):
        QCNN(MICRO, {})


def test_default_feature_shapes():
    assert ModelSpec().feature_shapes() == [(24, 36, 32), (22, 34, 64)]
    assert ModelSpec().flat_dim == 143616


# -- loss and optimiser -------------------------------------------------------


def test_cross_entropy_examples():
    loss, g = cross_entropy(np.full(8, 0.125), 3)
    assert loss == pytest.approx(math.log(8), abs=1e-12)
    assert np.allclose(g, np.full(8, 0.125) - np.eye(8)[3])
    loss, _ = cross_entropy(np.array([0.0, 1.0]), 1)
    assert loss == 0.0
    loss, _ = cross_entropy(np.array([1.0, 0.0]), 1)
    assert math.isfinite(loss) and loss > 20
    with pytest.raises(InputError):
        cross_entropy(np.full(4, 0.25), 4)
    with pytest.raises(InputError):
        cross_entropy(np.full(4, 0.25), 1.5)


def test_softmax_cross_entropy_gradient(rng):
    z = rng.normal(size=(5, 4))
    y = np.array([0, 3, 1, 1, 2])
    _, g = cross_entropy(L.softmax(z), y)
    num = numeric_grad(lambda: cross_entropy(L.softmax(z), y)[0], z)
    assert max_rel_error(g, num) < 1e-4


def test_adam_first_step_moves_by_learning_rate():
    cfg = TrainConfig(learning_rate=1e-3)
    params = {"w": np.array([1.0, -2.0, 3.0]), "c.scale": np.array([5e-4, 1.0])}
    grads = {"w": np.array([0.5, -3.0, 0.0]), "c.scale": np.array([10.0, -1.0])}
    new, state = adam_step(params, grads, AdamState(), cfg)
    assert state.step == 1
    assert np.allclose(new["w"], [1.0 - 1e-3, -2.0 + 1e-3, 3.0], atol=1e-9)
    assert new["c.scale"][0] == L.S_MIN  # clamped
    assert new["c.scale"][1] == pytest.approx(1.001)
    again, _ = adam_step(params, grads, AdamState(), cfg)
    assert all(np.array_equal(again[k], new[k]) for k in new)


def test_adam_zero_gradient_is_noop():
    params = {"w": np.arange(3.0)}
    new, _ = adam_step(params, {"w": np.zeros(3)}, AdamState(), TrainConfig())
    assert np.array_equal(new["w"], params["w"])


def test_adam_rejects_non_finite():
    with pytest.raises(NumericsError, match="conv2"):
        adam_step({"conv2.angle": np.zeros(2)}, {"conv2.angle": np.array([0.0, np.nan])}, AdamState(), TrainConfig())


@pytest.mark.parametrize("seed", range(20))
def test_single_step_reduces_loss(seed):
    rng = np.random.default_rng(seed)
    model = QCNN.initialise(MICRO, seed)
    x, y = pure_images(rng, 4, 10, 12), rng.integers(0, 2, 4)
    logits, cache = model.forward(x)
    before, g = cross_entropy(L.softmax(logits), y)
    params, _ = adam_step(model.params, model.backward(g, cache), AdamState(), TrainConfig(learning_rate=1e-4))
    after, _ = cross_entropy(L.softmax(QCNN(MICRO, params).forward(x)[0]), y)
    assert after < before


# -- end-to-end gradient ------------------------------------------------------


def test_micro_model_finite_differences():
    rng = np.random.default_rng(3)
    model = QCNN.initialise(MICRO, 3)
    x, y = pure_images(rng, 3, 10, 12), np.array([0, 1, 1])

    def loss():
        return cross_entropy(L.softmax(model.forward(x)[0]), y)[0]

    logits, cache = model.forward(x)
    _, g = cross_entropy(L.softmax(logits), y)
    grads = model.backward(g, cache)
    for name, p in model.params.items():
        assert max_rel_error(grads[name], numeric_grad(loss, p)) < 1e-4, name


def test_dropout_only_in_training():
    rng = np.random.default_rng(0)
    model = QCNN.initialise(MICRO, 0)
    x = pure_images(rng, 2, 10, 12)
    a = model.forward(x, train=False, dropout_p=0.5)[0]
    b = model.forward(x)[0]
    c = model.forward(x, train=True, rng=np.random.default_rng(1), dropout_p=0.5)[0]
    assert np.array_equal(a, b) and not np.array_equal(a, c)


# -- accounting and evaluation ------------------------------------------------


def test_count_parameters():
    rep = count_parameters(ModelSpec())
    assert rep.layers == [("conv1", 576), ("conv2", 36864), ("dense", 8 * (143616 + 1))]
    assert rep.total == 576 + 36864 + 1148936
    assert rep.real_conv_layers[0] == ("conv1", 864)
    assert rep.conv_total < rep.real_conv_total
    assert 3 * rep.conv_total == 2 * rep.real_conv_total
    assert rep.param_bytes == 8 * rep.total


def test_evaluate_predictions():
    y = np.repeat(np.arange(4), [1, 2, 3, 4])
    rep = evaluate_predictions(np.zeros_like(y), y, 4)
    assert rep.unweighted_accuracy == pytest.approx(0.25)
    assert rep.accuracy == pytest.approx(0.1)
    assert rep.confusion.sum(axis=1).tolist() == [1, 2, 3, 4]
    assert evaluate_predictions(y, y, 4).accuracy == 1.0
    with pytest.raises(DataError):
        evaluate_predictions([], [], 4)


# -- training loop ------------------------------------------------------------


def small_problem():
    rng = np.random.default_rng(0)
    x = pure_images(rng, 12, 10, 12)
    y = np.arange(12) % 2
    x[y == 1, :, :6, 0, 1:] *= 0.2
    return x, y


def test_training_deterministic_and_learns():
    x, y = small_problem()
    cfg = TrainConfig(epochs=15, batch_size=4, learning_rate=1e-2, seed=5)
    a = train_arrays(x, y, x, y, MICRO, cfg)
    b = train_arrays(x, y, x, y, MICRO, cfg)
    assert [m.line() for m in a.log] == [m.line() for m in b.log]
    assert all(np.array_equal(a.final.params[k], b.final.params[k]) for k in a.final.params)
    assert a.log[-1].train_acc >= 0.9
    assert a.log[-1].train_loss < a.log[0].train_loss


def test_training_zero_epochs_and_empty_split():
    x, y = small_problem()
    res = train_arrays(x, y, x, y, MICRO, TrainConfig(epochs=0))
    assert res.log == []
    assert all(np.array_equal(res.final.params[k], init_weights(MICRO, 0)[k]) for k in res.final.params)
    with pytest.raises(DataError):
        train_arrays(x[:0], y[:0], x, y, MICRO, TrainConfig(epochs=1))
