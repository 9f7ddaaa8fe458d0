"""Central finite-difference verification of analytic gradients.

The loss closure must be deterministic: it is evaluated twice per parameter
element, so anything stochastic inside (dropout masks) has to be re-seeded on
every call.  Run in float64; float32 rounding alone can exceed the tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4


def numeric_gradient(loss_fn: Callable[[], float], array: np.ndarray, step=DEFAULT_STEP):
    """Central differences, one element at a time, restoring the array."""
    grad = np.zeros_like(array)
    for index in np.ndindex(array.shape):
        original = array[index]
        array[index] = original + step
        high = loss_fn()
        array[index] = original - step
        low = loss_fn()
        array[index] = original
        grad[index] = (high - low) / (2.0 * step)
    return grad


@dataclass(frozen=True)
class GradientCheckReport:
    per_group: dict[str, float]
    tolerance: float

    @property
    def max_rel_error(self) -> float:
        return max(self.per_group.values(), default=0.0)

    @property
    def ok(self) -> bool:
        return self.max_rel_error < self.tolerance

    @property
    def worst_group(self) -> str:
        return max(self.per_group, key=self.per_group.get, default="")

    def __str__(self) -> str:
        state = "ok" if self.ok else "FAILED"
        return (
            f"gradient check {state}: max relative error "
            f"{self.max_rel_error:.3e} (worst group {self.worst_group!r}, "
            f"tolerance {self.tolerance:.1e})"
        )


def gradient_check(
    loss_fn: Callable[[], float],
    params: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    step=DEFAULT_STEP,
    tolerance=DEFAULT_TOLERANCE,
) -> GradientCheckReport:
    """Compare analytic gradients against finite differences per group.

    The relative error of an element pair (a, n) is |a - n| scaled by
    max(|a|, |n|, 1e-5); the floor keeps near-zero gradients from blowing up
    the ratio.
    """
    per_group = {}
    for name, array in params.items():
        numeric = numeric_gradient(loss_fn, array, step)
        exact = analytic[name]
        if exact.shape != numeric.shape:
            raise ValueError(
                f"group {name!r}: analytic shape {exact.shape} does not match "
                f"parameter shape {numeric.shape}"
            )
        scale = np.maximum(np.maximum(np.abs(numeric), np.abs(exact)), 1e-5)
        rel = np.abs(numeric - exact) / scale
        per_group[name] = float(rel.max()) if rel.size else 0.0
    return GradientCheckReport(per_group=per_group, tolerance=tolerance)
