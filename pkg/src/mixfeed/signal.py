"""Discretized T-periodic signals and periodic central differences.

Every operation here treats the sample vector cyclically: ``x[-1]`` is the
sample before ``x[0]`` and ``x[N]`` wraps back to ``x[0]``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "GridMismatchError",
    "PeriodicGrid",
    "PeriodicSignal",
    "inner_product",
    "norm",
    "diff1",
    "diff2",
    "relative_change",
    "zero_crossings",
    "best_cyclic_shift",
    "write_csv",
    "read_csv",
]

DEFAULT_FLOOR = 1e-12


class GridMismatchError(ValueError):
    """Raised when two signals living on different grids are combined."""


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform partition of one period ``[0, T)`` into ``N`` samples."""

    period: float
    num_samples: int

    def __post_init__(self):
        if not (math.isfinite(self.period) and self.period > 0):
            raise ValueError(f"period must be positive and finite, got {self.period}")
        if int(self.num_samples) != self.num_samples or self.num_samples < 4:
            raise ValueError(f"num_samples must be an integer >= 4, got {self.num_samples}")
        object.__setattr__(self, "num_samples", int(self.num_samples))
        object.__setattr__(self, "period", float(self.period))

    @property
    def step(self) -> float:
        return self.period / self.num_samples

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.num_samples) * self.step

    def with_period(self, period: float) -> "PeriodicGrid":
        return PeriodicGrid(period, self.num_samples)


@dataclass(frozen=True, eq=False)
class PeriodicSignal:
    """Samples of a T-periodic signal on a :class:`PeriodicGrid`.

    The sample array is copied and made read-only on construction, so a
    signal can be shared freely between callers.
    """

    grid: PeriodicGrid
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float).reshape(-1)
        if arr.shape[0] != self.grid.num_samples:
            raise ValueError(
                f"expected {self.grid.num_samples} samples, got {arr.shape[0]}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("signal samples must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @classmethod
    def zeros(cls, grid: PeriodicGrid) -> "PeriodicSignal":
        return cls(grid, np.zeros(grid.num_samples))

    @classmethod
    def constant(cls, grid: PeriodicGrid, value: float) -> "PeriodicSignal":
        return cls(grid, np.full(grid.num_samples, float(value)))

    @classmethod
    def from_function(cls, grid: PeriodicGrid, fn) -> "PeriodicSignal":
        return cls(grid, fn(grid.times))

    def __len__(self):
        return self.grid.num_samples

    def __eq__(self, other):
        if not isinstance(other, PeriodicSignal):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.samples, other.samples)

    __hash__ = None

    def _check(self, other: "PeriodicSignal"):
        if self.grid != other.grid:
            raise GridMismatchError(f"grid mismatch: {self.grid} vs {other.grid}")

    def __add__(self, other):
        if isinstance(other, PeriodicSignal):
            self._check(other)
            return PeriodicSignal(self.grid, self.samples + other.samples)
        return PeriodicSignal(self.grid, self.samples + float(other))

    def __sub__(self, other):
        if isinstance(other, PeriodicSignal):
            self._check(other)
            return PeriodicSignal(self.grid, self.samples - other.samples)
        return PeriodicSignal(self.grid, self.samples - float(other))

    def __mul__(self, scalar):
        return PeriodicSignal(self.grid, self.samples * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return PeriodicSignal(self.grid, -self.samples)

    def shifted(self, m: int) -> "PeriodicSignal":
        """Cyclic delay by ``m`` samples: ``out[k] = x[k - m]``."""
        return PeriodicSignal(self.grid, np.roll(self.samples, m))

    def on_grid(self, grid: PeriodicGrid) -> "PeriodicSignal":
        """Reuse the same samples on another grid with equal N (time rescaling)."""
        return PeriodicSignal(grid, self.samples)

    @property
    def amplitude(self) -> float:
        return 0.5 * float(self.samples.max() - self.samples.min())


def inner_product(a: PeriodicSignal, b: PeriodicSignal) -> float:
    a._check(b)
    # fixed left-to-right order keeps results reproducible across callers
    return float(np.dot(a.samples, b.samples))


def norm(a: PeriodicSignal) -> float:
    return math.sqrt(inner_product(a, a))


def diff1(x: PeriodicSignal) -> PeriodicSignal:
    """Central first difference ``(x[k+1] - x[k-1]) / 2h`` with cyclic wrap."""
    s = x.samples
    return PeriodicSignal(x.grid, (np.roll(s, -1) - np.roll(s, 1)) / (2.0 * x.grid.step))


def diff2(x: PeriodicSignal) -> PeriodicSignal:
    """Central second difference ``(x[k+1] - 2x[k] + x[k-1]) / h^2`` with cyclic wrap."""
    s = x.samples
    h = x.grid.step
    return PeriodicSignal(x.grid, (np.roll(s, -1) - 2.0 * s + np.roll(s, 1)) / (h * h))


def relative_change(
    new: PeriodicSignal, old: PeriodicSignal, floor: float = DEFAULT_FLOOR
) -> float:
    """``max|new - old| / max(max|old|, floor)``."""
    new._check(old)
    num = float(np.max(np.abs(new.samples - old.samples)))
    den = max(float(np.max(np.abs(old.samples))), floor)
    return num / den


def zero_crossings(x: PeriodicSignal, direction: str = "both") -> list[float]:
    """Linearly interpolated sign-change times in ``[0, T)``.

    A sample that is exactly zero counts as one crossing at its own time.
    ``direction`` is ``"both"``, ``"up"`` (negative to positive) or ``"down"``.
    """
    if direction not in ("both", "up", "down"):
        raise ValueError(f"unknown direction {direction!r}")
    s = x.samples
    h = x.grid.step
    nxt = np.roll(s, -1)
    prv = np.roll(s, 1)
    out: list[tuple[float, bool]] = []

    for k in np.flatnonzero(s == 0.0):
        out.append((k * h, bool(prv[k] < nxt[k])))

    strict = np.flatnonzero(s * nxt < 0.0)
    for k in strict:
        frac = s[k] / (s[k] - nxt[k])
        t = (k + frac) * h
        if t >= x.grid.period:
            t -= x.grid.period
        out.append((t, bool(nxt[k] > s[k])))

    out.sort()
    if direction == "up":
        return [t for t, up in out if up]
    if direction == "down":
        return [t for t, up in out if not up]
    return [t for t, _ in out]


def best_cyclic_shift(a: np.ndarray, b: np.ndarray) -> tuple[int, float]:
    """Shift ``m`` minimizing ``|a - roll(b, m)|`` and that minimal squared distance."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.shape[0]
    # corr[m] = sum_k a[k] b[k - m]
    corr = np.fft.irfft(np.fft.rfft(a) * np.conj(np.fft.rfft(b)), n=n)
    m = int(np.argmax(corr))
    return m, float(np.sum((a - np.roll(b, m)) ** 2))


def _fmt(v: float) -> str:
    return format(float(v), ".12g")


def write_csv(x: PeriodicSignal, path) -> None:
    """Write ``t,value`` rows with 12 significant digits and LF endings."""
    buf = io.StringIO()
    buf.write("t,value\n")
    for t, v in zip(x.grid.times, x.samples):
        buf.write(f"{_fmt(t)},{_fmt(v)}\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def read_csv(path, period: float | None = None) -> PeriodicSignal:
    """Read a ``t,value`` file written by :func:`write_csv`.

    The period defaults to ``N * (t[1] - t[0])``.
    """
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not lines or lines[0].strip().lower() != "t,value":
        raise ValueError(f"{path}: expected header 't,value'")
    rows = [ln.split(",") for ln in lines[1:] if ln.strip()]
    t = np.array([float(r[0]) for r in rows])
    v = np.array([float(r[1]) for r in rows])
    if period is None:
        if len(t) < 2:
            raise ValueError(f"{path}: need at least two rows to infer the period")
        period = len(t) * (t[1] - t[0])
    return PeriodicSignal(PeriodicGrid(period, len(v)), v)
