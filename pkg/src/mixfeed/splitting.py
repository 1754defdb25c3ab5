"""Douglas-Rachford splitting for ``0 in F1(w) + F2(w)``.

Only the two resolvents are needed. Maps act on raw sample arrays so that
the inner loop does not allocate wrapper objects on every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .signal import DEFAULT_FLOOR, PeriodicSignal

__all__ = ["DrConfig", "DrResult", "DrNonConvergence", "dr_step", "dr_solve"]

ArrayMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DrConfig:
    """Parameters of the inner loop.

    ``tol`` bounds the relative change of the shadow iterate between steps.
    When ``residual_tol`` is set and the caller supplies a residual function,
    the loop also requires ``residual <= residual_tol * (1 + |w|)`` before it
    reports convergence.
    """

    lam: float = 0.05
    tol: float = 0.01
    max_iters: int = 10000
    residual_tol: Optional[float] = None
    floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if int(self.max_iters) < 1:
            raise ValueError("max_iters must be >= 1")
        if self.residual_tol is not None and not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")


@dataclass
class DrResult:
    zero_candidate: PeriodicSignal
    shadow: PeriodicSignal
    inner_iters: int
    final_relative_change: float
    residual_norm: Optional[float] = None
    change_history: list[float] = field(default_factory=list, repr=False)


class DrNonConvergence(RuntimeError):
    def __init__(self, message: str, result: DrResult):
        super().__init__(message)
        self.result = result


def dr_step(res_f1: ArrayMap, res_f2: ArrayMap, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One sweep ``y -> y + res_f2(2 res_f1(y) - y) - res_f1(y)``; returns (y_next, w_half)."""
    w_half = res_f1(y)
    z = 2.0 * w_half - y
    w_full = res_f2(z)
    return y + w_full - w_half, w_half


def _rel(new, old, floor):
    return float(np.max(np.abs(new - old))) / max(float(np.max(np.abs(old))), floor)


def dr_solve(
    res_f1: ArrayMap,
    res_f2: ArrayMap,
    y0: PeriodicSignal,
    cfg: DrConfig,
    residual: Optional[Callable[[np.ndarray, np.ndarray], float]] = None,
) -> DrResult:
    """Run Douglas-Rachford from the shadow point ``y0``.

    The returned ``zero_candidate`` is ``res_f1`` applied to the final shadow,
    which always lies in the domain of F1. ``residual(y, w)`` receives that
    shadow and candidate.
    """
    grid = y0.grid
    y = np.array(y0.samples, dtype=float)
    history: list[float] = []
    change = np.inf
    res_norm = None
    for j in range(1, cfg.max_iters + 1):
        y_next, _ = dr_step(res_f1, res_f2, y)
        change = _rel(y_next, y, cfg.floor)
        history.append(change)
        y = y_next
        if change < cfg.tol:
            if residual is None or cfg.residual_tol is None:
                break
            w = res_f1(y)
            res_norm = residual(y, w)
            if res_norm <= cfg.residual_tol * (1.0 + float(np.linalg.norm(w))):
                break
    else:
        w = res_f1(y)
        result = DrResult(
            PeriodicSignal(grid, w), PeriodicSignal(grid, y), cfg.max_iters, change,
            res_norm, history,
        )
        raise DrNonConvergence(
            f"Douglas-Rachford did not converge in {cfg.max_iters} iterations "
            f"(last relative change {change:.3g})",
            result,
        )
    w = res_f1(y)
    if residual is not None and res_norm is None:
        res_norm = residual(y, w)
    return DrResult(
        PeriodicSignal(grid, w), PeriodicSignal(grid, y), j, change, res_norm, history
    )
