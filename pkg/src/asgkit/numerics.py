"""Log-domain arithmetic and a finite-difference gradient checker.

All dynamic programs and beam scores in this package work in the log
domain with float64; ``NEG_INF`` is the additive identity of ``logadd``
and stands for log(0).
"""

from __future__ import annotations

import math
from typing import Callable, Iterable

import numpy as np

from .errors import NonFinite

NEG_INF = float("-inf")


def logadd(a: float, b: float) -> float:
    """Return log(exp(a) + exp(b)) without overflow.

    Total on NEG_INF: logadd(NEG_INF, x) == x and
    logadd(NEG_INF, NEG_INF) == NEG_INF. Never returns NaN for
    non-NaN inputs.
    """
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def logadd_all(xs: Iterable[float]) -> float:
    """Log-sum-exp of a sequence, max-shifted; empty input gives NEG_INF."""
    arr = np.asarray(list(xs) if not isinstance(xs, np.ndarray) else xs, dtype=np.float64)
    if arr.size == 0:
        return NEG_INF
    m = float(np.max(arr))
    if m == NEG_INF:
        return NEG_INF
    return m + math.log(float(np.sum(np.exp(arr - m))))


def finite_diff_check(
    loss_fn: Callable[[np.ndarray], float],
    params: np.ndarray,
    analytic_grad: np.ndarray,
    step: float = 1e-5,
) -> float:
    """Max relative error between ``analytic_grad`` and central differences.

    For each coordinate i the numeric derivative is
    (loss(p + step*e_i) - loss(p - step*e_i)) / (2*step) and the error is
    |analytic - numeric| / max(1, |numeric|); the maximum over coordinates
    is returned.

    Raises:
        NonFinite: if ``loss_fn`` returns NaN or +/-inf at any probe point.
    """
    params = np.asarray(params, dtype=np.float64)
    analytic_grad = np.asarray(analytic_grad, dtype=np.float64)
    if params.shape != analytic_grad.shape:
        raise ValueError("params and analytic_grad must have the same shape")
    if not step > 0:
        raise ValueError("step must be positive")

    worst = 0.0
    flat = params.ravel()
    grad = analytic_grad.ravel()
    for i in range(flat.size):
        probe = flat.copy()
        probe[i] = flat[i] + step
        f_plus = float(loss_fn(probe.reshape(params.shape)))
        probe[i] = flat[i] - step
        f_minus = float(loss_fn(probe.reshape(params.shape)))
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise NonFinite(f"loss is not finite near coordinate {i}")
        numeric = (f_plus - f_minus) / (2.0 * step)
        err = abs(grad[i] - numeric) / max(1.0, abs(numeric))
        worst = max(worst, err)
    return worst
