"""Parameterised layers with cached forward state and explicit backward."""

from __future__ import annotations

import numpy as np

from . import functional as F


class Parameter:
    __slots__ = ("name", "value", "grad", "adam_m", "adam_v")

    def __init__(self, value: np.ndarray, name: str = ""):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)
        self.adam_m = np.zeros_like(value)
        self.adam_v = np.zeros_like(value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0

    def astype(self, dtype) -> None:
        self.value = self.value.astype(dtype)
        self.grad = self.grad.astype(dtype)
        self.adam_m = self.adam_m.astype(dtype)
        self.adam_v = self.adam_v.astype(dtype)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape, dtype=np.float32):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Module:
    training = False

    def parameters(self) -> list[Parameter]:
        return []

    def buffers(self) -> dict[str, np.ndarray]:
        """Non-trainable state that still has to be persisted."""
        return {}

    def set_buffer(self, name: str, value: np.ndarray, loaded: bool = True) -> None:
        raise KeyError(name)

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


class Dense(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, name: str = "dense"):
        self.W = Parameter(glorot(rng, n_in, n_out, (n_in, n_out)), f"{name}.W")
        self.b = Parameter(np.zeros(n_out, np.float32), f"{name}.b")

    def forward(self, x, rng=None):
        self._x = x
        return F.dense_forward(x, self.W.value, self.b.value)

    def backward(self, dy):
        dx, dW, db = F.dense_backward(self._x, self.W.value, dy)
        self.W.grad += dW
        self.b.grad += db
        return dx

    def parameters(self):
        return [self.W, self.b]


class Conv1D(Module):
    def __init__(self, kernel: int, c_in: int, c_out: int, stride: int, rng, name: str = "conv"):
        self.stride = stride
        self.K = Parameter(
            glorot(rng, kernel * c_in, kernel * c_out, (kernel, c_in, c_out)), f"{name}.K"
        )
        self.b = Parameter(np.zeros(c_out, np.float32), f"{name}.b")

    @property
    def kernel(self) -> int:
        return self.K.shape[0]

    def forward(self, x, rng=None):
        self._shape = x.shape
        y, self._cols = F.conv1d_forward(x, self.K.value, self.b.value, self.stride)
        return y

    def backward(self, dy):
        dx, dK, db = F.conv1d_backward(self._shape, self._cols, self.K.value, dy, self.stride)
        self.K.grad += dK
        self.b.grad += db
        return dx

    def parameters(self):
        return [self.K, self.b]


class MaxPool1D(Module):
    def __init__(self, size: int = 2, stride: int = 2):
        self.size, self.stride = size, stride

    def forward(self, x, rng=None):
        self._shape = x.shape
        y, self._arg = F.maxpool1d_forward(x, self.size, self.stride)
        return y

    def backward(self, dy):
        return F.maxpool1d_backward(self._shape, self._arg, dy, self.size, self.stride)


class Activation(Module):
    def __init__(self, kind: str):
        self.kind = kind
        self._f, self._df = F.ACTIVATIONS[kind]

    def forward(self, x, rng=None):
        self._x = x
        self._y = self._f(x)
        return self._y

    def backward(self, dy):
        return dy * self._df(self._x, self._y)


class BatchNorm(Module):
    def __init__(self, n: int, name: str = "bn", momentum: float = F.BN_MOMENTUM, eps: float = F.BN_EPS):
        self.gamma = Parameter(np.ones(n, np.float32), f"{name}.gamma")
        self.beta = Parameter(np.zeros(n, np.float32), f"{name}.beta")
        self.running_mean = np.zeros(n, np.float32)
        self.running_var = np.ones(n, np.float32)
        self.momentum, self.eps, self.name = momentum, eps, name
        # the first training batch seeds the running statistics; later ones blend in
        self.seeded = False
        self._census = None

    def begin_census(self) -> None:
        """Start accumulating exact population statistics instead of the moving average."""
        self._census = [0, 0.0, 0.0]

    def end_census(self) -> None:
        n, s1, s2 = self._census
        self._census = None
        if n:
            mean = s1 / n
            self.running_mean = mean.astype(self.running_mean.dtype)
            self.running_var = np.maximum(s2 / n - mean * mean, 0).astype(self.running_var.dtype)
            self.seeded = True

    def forward(self, x, rng=None):
        if not self.training:
            return F.batchnorm_infer(
                x, self.gamma.value, self.beta.value, self.running_mean, self.running_var, self.eps
            ).astype(x.dtype)
        y, self._cache = F.batchnorm_train(x, self.gamma.value, self.beta.value, self.eps)
        _, _, mu, var = self._cache
        if self._census is not None:
            xd = x.astype(np.float64)
            self._census[0] += len(x)
            self._census[1] = self._census[1] + xd.sum(axis=0)
            self._census[2] = self._census[2] + (xd * xd).sum(axis=0)
            return y
        m = self.momentum if self.seeded else 0.0
        self.seeded = True
        self.running_mean = (m * self.running_mean + (1 - m) * mu).astype(self.running_mean.dtype)
        self.running_var = (m * self.running_var + (1 - m) * var).astype(self.running_var.dtype)
        return y

    def backward(self, dy):
        dx, dg, db = F.batchnorm_backward(self._cache, self.gamma.value, dy)
        self.gamma.grad += dg
        self.beta.grad += db
        return dx

    def parameters(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return {f"{self.name}.running_mean": self.running_mean, f"{self.name}.running_var": self.running_var}

    def set_buffer(self, name, value, loaded=True):
        # stats restored from a file count as seeded; a dtype cast changes nothing
        self.seeded = self.seeded or loaded
        if name == f"{self.name}.running_mean":
            self.running_mean = value
        elif name == f"{self.name}.running_var":
            self.running_var = value
        else:
            raise KeyError(name)


class Dropout(Module):
    def __init__(self, p: float = 0.5):
        if not 0 <= p < 1:
            raise ValueError(f"dropout probability {p} outside [0, 1)")
        self.p = p

    def forward(self, x, rng=None):
        if not self.training or self.p == 0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("training-mode dropout needs an explicit rng stream")
        self._mask = F.dropout_mask(x.shape, self.p, rng, x.dtype)
        return x * self._mask

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask


class Flatten(Module):
    def forward(self, x, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Sequential(Module):
    def __init__(self, *layers: Module):
        self.layers = list(layers)

    def forward(self, x, rng=None):
        for layer in self.layers:
            x = layer.forward(x, rng)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def train(self, mode: bool = True):
        self.training = mode
        for layer in self.layers:
            layer.train(mode)
        return self

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def buffers(self):
        out = {}
        for layer in self.layers:
            out.update(layer.buffers())
        return out

    def set_buffer(self, name, value, loaded=True):
        for layer in self.layers:
            if name in layer.buffers():
                layer.set_buffer(name, value, loaded)
                return
        raise KeyError(name)


def cast_module(module: Module, dtype) -> None:
    """Cast every parameter and buffer in place (used for 64-bit checks)."""
    for p in module.parameters():
        p.astype(dtype)
    for name, value in module.buffers().items():
        module.set_buffer(name, value.astype(dtype), loaded=False)
