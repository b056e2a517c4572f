"""Stateless forward/backward kernels.

Arrays are float32 in normal use; every kernel runs in whatever dtype it is
handed, which is how the 64-bit gradient checks reuse the same code.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import KernelTooLong, ShapeMismatch

BN_EPS = 1e-5
BN_MOMENTUM = 0.99
BCE_CLAMP = 1e-7


# -- dense ------------------------------------------------------------------

def dense_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    if x.shape[-1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ShapeMismatch(f"dense: x{x.shape} W{W.shape} b{b.shape}")
    return x @ W + b


def dense_backward(x, W, dy):
    """Returns (dx, dW, db)."""
    return dy @ W.T, x.T @ dy, dy.sum(axis=0)


# -- conv1d -----------------------------------------------------------------

def conv_out_len(length: int, kernel: int, stride: int) -> int:
    if kernel > length:
        raise KernelTooLong(f"kernel {kernel} longer than input {length}")
    if stride < 1:
        raise ValueError("stride must be at least 1")
    return (length - kernel) // stride + 1


def _as_batch(x):
    return (x[None], True) if x.ndim == 2 else (x, False)


def conv1d_forward(x: np.ndarray, K: np.ndarray, b: np.ndarray, stride: int = 1):
    """Valid 1-D convolution. ``x`` is (len, in_ch) or (batch, len, in_ch);
    ``K`` is (kernel, in_ch, out_ch). Returns (y, cols) where ``cols`` is the
    im2col buffer needed by the backward pass."""
    xb, squeeze = _as_batch(x)
    k, cin, cout = K.shape
    B, L, C = xb.shape
    if C != cin or b.shape != (cout,):
        raise ShapeMismatch(f"conv1d: x{x.shape} K{K.shape} b{b.shape}")
    if L < k:
        raise KernelTooLong(f"conv1d: input length {L} < kernel {k}")
    n_out = conv_out_len(L, k, stride)
    # (B, L-k+1, C, k) -> strided -> (B, n_out, C*k) ordered (c, j)
    cols = sliding_window_view(xb, k, axis=1)[:, ::stride][:, :n_out].reshape(B, n_out, C * k)
    Kmat = K.transpose(1, 0, 2).reshape(C * k, cout)
    y = cols @ Kmat + b
    return (y[0] if squeeze else y), cols


def conv1d_backward(x_shape, cols, K, dy, stride: int = 1):
    """Returns (dx, dK, db)."""
    k, cin, cout = K.shape
    squeeze = len(x_shape) == 2
    dyb = dy[None] if squeeze else dy
    B, n_out, _ = dyb.shape
    L = x_shape[-2]
    Kmat = K.transpose(1, 0, 2).reshape(cin * k, cout)
    flat_dy = dyb.reshape(B * n_out, cout)
    dKmat = cols.reshape(B * n_out, cin * k).T @ flat_dy
    dK = dKmat.reshape(cin, k, cout).transpose(1, 0, 2)
    db = flat_dy.sum(axis=0)
    dcols = (dyb @ Kmat.T).reshape(B, n_out, cin, k)
    dx = np.zeros((B, L, cin), dtype=dy.dtype)
    span = stride * (n_out - 1) + 1
    if stride == k:
        dx[:, : n_out * k] += dcols.transpose(0, 1, 3, 2).reshape(B, n_out * k, cin)
    else:
        for j in range(k):
            dx[:, j : j + span : stride] += dcols[:, :, :, j]
    return (dx[0] if squeeze else dx), np.ascontiguousarray(dK), db


# -- max pooling ------------------------------------------------------------

def maxpool1d_forward(x: np.ndarray, size: int = 2, stride: int = 2):
    """Returns (y, argmax) with argmax giving the winning window offset."""
    xb, squeeze = _as_batch(x)
    B, L, C = xb.shape
    n_out = conv_out_len(L, size, stride) if L >= size else 0
    win = sliding_window_view(xb, size, axis=1)[:, ::stride][:, :n_out]  # (B, n_out, C, size)
    arg = win.argmax(axis=-1)
    y = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return (y[0] if squeeze else y), arg


def maxpool1d_backward(x_shape, arg, dy, size: int = 2, stride: int = 2):
    squeeze = len(x_shape) == 2
    dyb = dy[None] if squeeze else dy
    argb = arg[None] if arg.ndim == 2 else arg
    B, n_out, C = dyb.shape
    dx = np.zeros((B, x_shape[-2], C), dtype=dy.dtype)
    rows = np.arange(n_out)[None, :, None] * stride + argb
    np.add.at(dx, (np.arange(B)[:, None, None], rows, np.arange(C)[None, None, :]), dyb)
    return dx[0] if squeeze else dx


# -- activations ------------------------------------------------------------

def relu(x):
    return np.maximum(x, 0)


def relu_grad(x):
    return (x > 0).astype(x.dtype)


def tanh(x):
    return np.tanh(x)


def tanh_grad_from_output(y):
    return 1 - y * y


def sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1 / (1 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1 + ex)
    return out


def sigmoid_grad_from_output(y):
    return y * (1 - y)


ACTIVATIONS = {
    "relu": (relu, lambda x, y: relu_grad(x)),
    "tanh": (tanh, lambda x, y: tanh_grad_from_output(y)),
    "sigmoid": (sigmoid, lambda x, y: sigmoid_grad_from_output(y)),
}


# -- batch normalization ----------------------------------------------------

def batchnorm_train(x, gamma, beta, eps: float = BN_EPS):
    mu = x.mean(axis=0)
    var = x.var(axis=0)
    inv = 1 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    return gamma * xhat + beta, (xhat, inv, mu, var)


def batchnorm_infer(x, gamma, beta, running_mean, running_var, eps: float = BN_EPS):
    return gamma * (x - running_mean) / np.sqrt(running_var + eps) + beta


def batchnorm_backward(cache, gamma, dy):
    """Returns (dx, dgamma, dbeta) for training-mode normalization."""
    xhat, inv, _, _ = cache
    n = dy.shape[0]
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    dxhat = dy * gamma
    dx = inv / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
    return dx, dgamma, dbeta


# -- dropout ----------------------------------------------------------------

def dropout_mask(shape, p: float, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability p, else 1/(1-p)."""
    if not 0 <= p < 1:
        raise ValueError(f"dropout probability {p} outside [0, 1)")
    if p == 0:
        return np.ones(shape, dtype=dtype)
    keep = rng.random(shape) >= p
    return keep.astype(dtype) * np.asarray(1 / (1 - p), dtype=dtype)


# -- loss -------------------------------------------------------------------

def bce_loss(p: np.ndarray, y: np.ndarray):
    """Mean binary cross-entropy on probabilities.

    Probabilities are clamped to [1e-7, 1 - 1e-7]; the returned gradient is
    evaluated at the clamped point so saturated outputs still receive signal.
    """
    p = np.asarray(p)
    y = np.asarray(y, dtype=p.dtype)
    if p.shape != y.shape:
        raise ShapeMismatch(f"bce: predictions {p.shape} vs labels {y.shape}")
    ph = np.clip(p, BCE_CLAMP, 1 - BCE_CLAMP)
    n = p.size
    loss = -(y * np.log(ph) + (1 - y) * np.log(1 - ph)).mean()
    grad = (ph - y) / (ph * (1 - ph)) / n
    return float(loss), grad.astype(p.dtype)
