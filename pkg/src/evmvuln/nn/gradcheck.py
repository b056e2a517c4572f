"""Central-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(
    loss: Callable[[], float],
    arrays: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    eps: float = 1e-4,
    max_entries: int | None = 40,
    rng: np.random.Generator | None = None,
    floor: float = 1e-8,
) -> float:
    """Max relative error between ``grads`` and central differences of ``loss``.

    ``arrays`` are perturbed in place (they should be float64) and restored.
    ``loss`` must recompute from scratch with any randomness replayed.
    At most ``max_entries`` entries per array are probed, chosen by ``rng``.
    ``floor`` bounds the denominator so exact zeros compare against round-off.
    """
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for arr, g in zip(arrays, grads):
        if arr.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {arr.shape}")
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            up = loss()
            flat[i] = orig - eps
            down = loss()
            flat[i] = orig
            worst = max(worst, relative_error(float(gflat[i]), (up - down) / (2 * eps), floor))
    return worst
