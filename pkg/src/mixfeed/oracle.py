"""Reference limit cycles from direct time integration.

Classical fixed-step RK4 on ``x' = v, v' = -x - K (x^2 - 1) v``. The step is
never adapted, so a run is bitwise reproducible for a given configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .signal import PeriodicGrid, PeriodicSignal, best_cyclic_shift
from .systems import period_guess

__all__ = [
    "DivergenceError",
    "TransientError",
    "OdeRun",
    "LimitCycleFeatures",
    "integrate_vdp",
    "extract_limit_cycle",
    "compare_waveforms",
]

DIVERGENCE_LIMIT = 1e6


class DivergenceError(ArithmeticError):
    pass


class TransientError(ValueError):
    """Too few cycles survive the discard window to measure a period."""


@dataclass(frozen=True, eq=False)
class OdeRun:
    K: float
    step: float
    t_end: float
    initial_state: tuple[float, float]
    x: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.x.shape[0]) * self.step


@dataclass(frozen=True, eq=False)
class LimitCycleFeatures:
    amplitude: float
    period: float
    waveform: PeriodicSignal = field(repr=False)

    def to_dict(self) -> dict:
        return {"amplitude": float(self.amplitude), "period": float(self.period)}


@numba.njit(cache=True)
def _rk4_vdp(K, h, n, x0, v0, limit):
    xs = np.empty(n + 1)
    vs = np.empty(n + 1)
    x = x0
    v = v0
    xs[0] = x
    vs[0] = v
    for i in range(n):
        k1x = v
        k1v = -x - K * (x * x - 1.0) * v
        xa = x + 0.5 * h * k1x
        va = v + 0.5 * h * k1v
        k2x = va
        k2v = -xa - K * (xa * xa - 1.0) * va
        xb = x + 0.5 * h * k2x
        vb = v + 0.5 * h * k2v
        k3x = vb
        k3v = -xb - K * (xb * xb - 1.0) * vb
        xc = x + h * k3x
        vc = v + h * k3v
        k4x = vc
        k4v = -xc - K * (xc * xc - 1.0) * vc
        x = x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        v = v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        xs[i + 1] = x
        vs[i + 1] = v
        if not (abs(x) <= limit and abs(v) <= limit):
            return xs[: i + 2], vs[: i + 2], i + 1
    return xs, vs, -1


def integrate_vdp(
    K: float,
    step: float = 1e-4,
    t_end: float | None = None,
    initial_state: tuple[float, float] = (2.0, 0.0),
) -> OdeRun:
    """Integrate the Van der Pol equation from ``initial_state``.

    ``t_end`` defaults to 30 times :func:`period_guess`.

    Raises
    ------
    DivergenceError
        If ``|x|`` or ``|v|`` exceeds 1e6 (step too large).
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if K < 0:
        raise ValueError("K must be nonnegative")
    if t_end is None:
        t_end = 30.0 * period_guess(K)
    n = int(round(t_end / step))
    if n < 1:
        raise ValueError("t_end must cover at least one step")
    x0, v0 = (float(s) for s in initial_state)
    xs, vs, bad = _rk4_vdp(float(K), float(step), n, x0, v0, DIVERGENCE_LIMIT)
    if bad >= 0:
        raise DivergenceError(
            f"state left |.| <= {DIVERGENCE_LIMIT:g} at t = {bad * step:.6g}; reduce the step"
        )
    return OdeRun(float(K), float(step), n * float(step), (x0, v0), xs, vs)


def _up_crossing_times(x: np.ndarray, h: float) -> np.ndarray:
    idx = np.flatnonzero((x[:-1] < 0.0) & (x[1:] >= 0.0))
    return (idx + x[idx] / (x[idx] - x[idx + 1])) * h


def extract_limit_cycle(
    run: OdeRun, discard_fraction: float = 0.5, num_samples: int = 5000
) -> LimitCycleFeatures:
    """Period, amplitude and one resampled cycle from the tail of ``run``.

    The returned waveform starts at an up-crossing of x.
    """
    if not 0.0 <= discard_fraction < 1.0:
        raise ValueError("discard_fraction must lie in [0, 1)")
    start = int(discard_fraction * run.x.shape[0])
    x = run.x[start:]
    h = run.step
    up = _up_crossing_times(x, h)
    if up.size < 4:
        raise TransientError(
            f"only {up.size} up-crossings after discarding {discard_fraction:.0%}; increase t_end"
        )
    period = float(np.mean(np.diff(up)))
    amplitude = 0.5 * float(x.max() - x.min())
    grid = PeriodicGrid(period, num_samples)
    t = up[0] + grid.times
    wave = np.interp(t, np.arange(x.shape[0]) * h, x)
    return LimitCycleFeatures(amplitude, period, PeriodicSignal(grid, wave))


def compare_waveforms(a: PeriodicSignal, b: PeriodicSignal) -> tuple[float, float]:
    """Best cyclic-shift RMS distance, normalized by the RMS of ``a``.

    Returns ``(rms_error, phase_shift)`` where ``b`` delayed by
    ``-phase_shift`` best matches ``a``; the shift is in time units of ``a``'s
    grid and lies in ``(-T/2, T/2]``.
    """
    n = a.grid.num_samples
    if b.grid.num_samples != n:
        raise ValueError("waveforms must have the same number of samples")
    m, d2 = best_cyclic_shift(a.samples, b.samples)
    na = float(np.linalg.norm(a.samples))
    rms = math.sqrt(d2) / na if na > 0 else math.sqrt(d2)
    k = (-m) % n
    if k > n // 2:
        k -= n
    return rms, k * a.grid.step
