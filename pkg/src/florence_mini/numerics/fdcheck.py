"""Finite-difference oracle for analytic gradients.

The analytic side comes from the tape; the numeric side is plain central
differences computed with recording disabled, so the oracle never shares a
code path with what it checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .tensor import Tensor, evaluate_and_backward, no_grad

KINK_TOL = 0.1


@dataclass
class FiniteDifferenceReport:
    max_rel_error: float
    rel_errors: np.ndarray
    kinks: list[int] = field(default_factory=list)  # flat indices where one-sided slopes disagree

    @property
    def differentiable(self) -> bool:
        return not self.kinks


def finite_difference_check(
    f: Callable[[Tensor], Tensor],
    point: np.ndarray,
    eps: float = 1e-5,
) -> FiniteDifferenceReport:
    """Compare tape gradients of scalar f against central differences.

    Per-coordinate relative error is |analytic - central| / (|central| +
    1e-12). Coordinates where the forward and backward one-sided slopes
    disagree are flagged as non-differentiable points and excluded from the
    max instead of being reported as silently large errors.
    """
    point = np.asarray(point, dtype=np.float64)
    x = Tensor(point.copy(), requires_grad=True, name="fd_point")
    out = f(x)
    if out.size != 1:
        raise ValueError("finite_difference_check needs a scalar-valued function")
    if not np.isfinite(out.data).all():
        raise ValueError("non-finite function value at the evaluation point")
    grads = evaluate_and_backward(out)
    analytic = grads.get(x)
    if analytic is None:
        analytic = np.zeros_like(point)
    analytic = analytic.reshape(-1)

    def value_at(arr: np.ndarray) -> float:
        with no_grad():
            y = f(Tensor(arr))
        val = float(y.data.reshape(()))
        if not np.isfinite(val):
            raise ValueError("non-finite function value during probing")
        return val

    f0 = value_at(point)
    flat = point.reshape(-1)
    n = flat.size
    rel_errors = np.zeros(n)
    kinks: list[int] = []
    for i in range(n):
        probe = point.copy().reshape(-1)
        probe[i] = flat[i] + eps
        f_plus = value_at(probe.reshape(point.shape))
        probe[i] = flat[i] - eps
        f_minus = value_at(probe.reshape(point.shape))
        central = (f_plus - f_minus) / (2.0 * eps)
        d_fwd = (f_plus - f0) / eps
        d_bwd = (f0 - f_minus) / eps
        if abs(d_fwd - d_bwd) > KINK_TOL * (abs(d_fwd) + abs(d_bwd) + 1.0):
            kinks.append(i)
            continue
        rel_errors[i] = abs(analytic[i] - central) / (abs(central) + 1e-12)
    max_rel = float(rel_errors.max()) if n else 0.0
    return FiniteDifferenceReport(max_rel_error=max_rel, rel_errors=rel_errors, kinks=kinks)
