"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

FD_STEP = 1e-4


def relative_error(a: float, n: float) -> float:
    """|a - n| scaled by max(1, |a|, |n|) so near-zero gradients compare absolutely."""
    return abs(a - n) / max(1.0, abs(a), abs(n))


def grad_check(params: list[np.ndarray], loss_fn: Callable[[], float],
               grads: list[np.ndarray], step: float = FD_STEP) -> float:
    """Compare analytic grads against central differences of loss_fn.

    loss_fn must read the live arrays in `params`; entries are perturbed in
    place and restored.  Returns the maximum relative error over every
    parameter element.
    """
    worst = 0.0
    for p, g in zip(params, grads):
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + step
            up = loss_fn()
            flat_p[i] = orig - step
            down = loss_fn()
            flat_p[i] = orig
            numeric = (up - down) / (2.0 * step)
            err = relative_error(float(flat_g[i]), numeric)
            if err > worst:
                worst = err
    return worst
