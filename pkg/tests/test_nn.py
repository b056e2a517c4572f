import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evmvuln.errors import KernelTooLong
from evmvuln.nn import (
    Activation, Adam, BatchNorm, Conv1D, Dense, Dropout, Flatten, MaxPool1D, Sequential, TrainConfig,
    bce_loss, cast_module, conv_out_len, grad_check, stream,
)
from evmvuln.nn import functional as F
from evmvuln.nn.layers import Parameter

TOL = 1e-3


def check_layer(layer, x, rng_seed=0, max_entries=30):
    """Max relative error of input and parameter gradients for loss = sum(R * layer(x))."""
    cast_module(layer, np.float64)
    x = x.astype(np.float64)
    layer.train()
    fwd_rng = lambda: stream(rng_seed, "check")  # replay dropout masks
    R = np.random.default_rng(1).normal(size=layer.forward(x, fwd_rng()).shape)

    def loss():
        return float((layer.forward(x, fwd_rng()) * R).sum())

    layer.zero_grad()
    layer.forward(x, fwd_rng())
    dx = layer.backward(R)
    params = layer.parameters()
    return grad_check(loss, [x, *[p.value for p in params]], [dx, *[p.grad for p in params]],
                      max_entries=max_entries)


def rng(seed=0):
    return np.random.default_rng(seed)


LAYERS = {
    "dense": lambda: (Dense(6, 4, rng()), rng(2).normal(size=(5, 6))),
    "conv1d": lambda: (Conv1D(3, 2, 4, 1, rng()), rng(2).normal(size=(3, 9, 2))),
    "conv1d-strided": lambda: (Conv1D(4, 1, 3, 4, rng()), rng(2).normal(size=(2, 12, 1))),
    "maxpool": lambda: (MaxPool1D(2, 2), rng(2).normal(size=(2, 9, 3))),
    "relu": lambda: (Activation("relu"), rng(2).normal(size=(4, 5)) + 0.05),
    "tanh": lambda: (Activation("tanh"), rng(2).normal(size=(4, 5))),
    "sigmoid": lambda: (Activation("sigmoid"), rng(2).normal(size=(4, 5))),
    "batchnorm": lambda: (BatchNorm(5), rng(2).normal(size=(8, 5)) * 3 + 1),
    "dropout": lambda: (Dropout(0.5), rng(2).normal(size=(6, 4))),
    "flatten": lambda: (Flatten(), rng(2).normal(size=(3, 4, 2))),
}


@pytest.mark.parametrize("name", LAYERS)
def test_layer_gradients(name):
    layer, x = LAYERS[name]()
    assert check_layer(layer, x) < TOL


def test_sequential_gradients():
    r = rng()
    # length 15 -> 5 -> 2 -> 1, two channels out of the last convolution
    net = Sequential(Conv1D(3, 1, 4, 3, r), Activation("relu"), MaxPool1D(), Conv1D(2, 4, 2, 1, r),
                     Activation("tanh"), Flatten(), Dense(2, 3, r), BatchNorm(3), Activation("sigmoid"))
    assert check_layer(net, rng(3).normal(size=(5, 15, 1))) < TOL


def test_bce_gradient():
    p = rng().uniform(0.05, 0.95, 7)
    y = (rng(1).random(7) > 0.5).astype(float)
    _, g = bce_loss(p, y)
    assert grad_check(lambda: bce_loss(p, y)[0], [p], [g]) < TOL


def test_corrupted_backward_is_caught():
    layer, x = LAYERS["dense"]()
    original = F.dense_backward

    def broken(x_, W, dy):
        dx, dW, db = original(x_, W, dy)
        return dx, dW * 1.01, db

    F.dense_backward = broken
    try:
        assert check_layer(layer, x) > TOL
    finally:
        F.dense_backward = original


def test_maxpool_odd_length_drops_tail():
    y, _ = F.maxpool1d_forward(np.arange(5.0).reshape(1, 5, 1))
    assert y.ravel().tolist() == [1.0, 3.0]


def test_conv_kernel_too_long():
    with pytest.raises(KernelTooLong):
        Conv1D(5, 1, 1, 1, rng()).forward(np.zeros((1, 3, 1)))


@given(st.integers(1, 50), st.integers(1, 10), st.integers(1, 10))
def test_conv_out_len(length, kernel, stride):
    if kernel > length:
        with pytest.raises(KernelTooLong):
            conv_out_len(length, kernel, stride)
    else:
        assert conv_out_len(length, kernel, stride) == len(range(0, length - kernel + 1, stride))


def test_conv_matches_loop_oracle():
    x = rng().normal(size=(2, 10, 3))
    layer = Conv1D(4, 3, 5, 2, rng(1))
    cast_module(layer, np.float64)
    y = layer.forward(x)
    K, b = layer.K.value, layer.b.value
    for n in range(2):
        for t in range(y.shape[1]):
            expect = np.einsum("kc,kco->o", x[n, 2 * t : 2 * t + 4], K) + b
            assert np.allclose(y[n, t], expect)


def bn_oracle(batches, momentum=0.99):
    """Running statistics: first batch copied, later batches blended in."""
    mean = var = None
    for xb in batches:
        mu, v = xb.mean(0), xb.var(0)
        if mean is None:
            mean, var = mu, v
        else:
            mean = momentum * mean + (1 - momentum) * mu
            var = momentum * var + (1 - momentum) * v
    return mean, var


def test_batchnorm_running_stats_match_oracle():
    bn = BatchNorm(3)
    cast_module(bn, np.float64)
    bn.train()
    batches = [rng(i).normal(i, 1 + i, size=(16, 3)) for i in range(4)]
    for xb in batches:
        bn.forward(xb)
    mean, var = bn_oracle(batches)
    assert np.allclose(bn.running_mean, mean) and np.allclose(bn.running_var, var)
    bn.eval()
    x = rng(9).normal(size=(2, 3))
    assert np.allclose(bn.forward(x), (x - mean) / np.sqrt(var + 1e-5))


def test_batchnorm_census_uses_population_statistics():
    bn = BatchNorm(2)
    cast_module(bn, np.float64)
    bn.train()
    data = rng().normal(3, 2, size=(40, 2))
    bn.begin_census()
    for chunk in np.split(data, 4):
        bn.forward(chunk)
    bn.end_census()
    assert np.allclose(bn.running_mean, data.mean(0)) and np.allclose(bn.running_var, data.var(0))


def test_dropout_needs_rng_and_scales():
    d = Dropout(0.5).train()
    with pytest.raises(ValueError):
        d.forward(np.ones((2, 2)))
    y = d.forward(np.ones((1000, 10)), stream(0, "d"))
    assert set(np.unique(y)) <= {0.0, 2.0}
    assert abs(y.mean() - 1) < 0.05
    d.eval()
    assert (d.forward(np.ones(3)) == 1).all()


def adam_oracle(theta, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta = theta - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    return theta


def test_adam_matches_oracle():
    p = Parameter(np.array([1.0, -2.0, 0.5]), "p")
    grads = [rng(i).normal(size=3) for i in range(5)]
    opt = Adam([p], lr=0.01)
    for g in grads:
        p.grad[:] = g
        opt.step()
        assert (p.grad == 0).all()
    assert np.allclose(p.value, adam_oracle(np.array([1.0, -2.0, 0.5]), grads, 0.01))


def test_bce_clamps_and_is_finite():
    loss, g = bce_loss(np.array([0.0, 1.0]), np.array([1.0, 0.0]))
    assert np.isfinite(loss) and np.isfinite(g).all()
    assert loss == pytest.approx(-np.log(1e-7), rel=1e-6)


def test_streams_are_named_and_reproducible():
    a = stream(3, "x", 1).random(4)
    assert (a == stream(3, "x", 1).random(4)).all()
    assert not (a == stream(3, "x", 2).random(4)).any()
    assert not (a == stream(4, "x", 1).random(4)).any()


def test_train_config_validation():
    assert TrainConfig() == TrainConfig(5e-4, 512, 100, 20, 0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
