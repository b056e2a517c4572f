from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import Parameter


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-4
    batch_size: int = 512
    max_epochs: int = 100
    early_stop_patience: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        for name in ("batch_size", "max_epochs", "early_stop_patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


class Adam:
    """Bias-corrected Adam; zeroes gradients after each step."""

    def __init__(self, params: list[Parameter], lr: float = 5e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1**self.t
        c2 = 1 - b2**self.t
        for p in self.params:
            g = p.grad
            p.adam_m *= b1
            p.adam_m += (1 - b1) * g
            p.adam_v *= b2
            p.adam_v += (1 - b2) * g * g
            mhat = p.adam_m / c1
            vhat = p.adam_v / c2
            p.value -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.value.dtype)
            p.zero_grad()


def adam_step(params: list[Parameter], config: TrainConfig, t: int) -> None:
    """Functional form: one Adam update at step ``t`` (1-based)."""
    opt = Adam(params, config.learning_rate)
    opt.t = t - 1
    opt.step()
