"""Outer loop for ``0 in A(y) - B(y)``: freeze B, solve the monotone rest.

At outer step i the positive feedback is evaluated at the current iterate
and moved to the right-hand side, leaving the monotone inclusion

    0 in H^{-1} y + E1(y) - u - E2(y_i),

which is split as F1 = H^{-1} (LTI) plus F2 = E1 - offset (static) and
handed to Douglas-Rachford. A scalar variant and a sampled contraction
diagnostic are included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .operators import (
    SINGULAR_RATIO,
    _solve_monotone_poly,
    difference_eigenvalues,
    apply_lti_min_norm,
    lti_inclusion_residual,
    lti_resolvent_map,
)
from .signal import (
    DEFAULT_FLOOR,
    PeriodicGrid,
    PeriodicSignal,
    best_cyclic_shift,
    zero_crossings,
)
from .splitting import DrConfig, DrNonConvergence, dr_solve
from .systems import MixedFeedbackSystem

__all__ = [
    "OuterConfig",
    "SolveReport",
    "OuterNonConvergence",
    "BasinEscapeError",
    "ContractionReport",
    "ContractionDiagnosticError",
    "PeriodAdaptation",
    "solve_mixed",
    "frozen_map",
    "forward_maps",
    "domain_projection",
    "scalar_mixed_solve",
    "estimate_contraction",
    "adapt_period",
]


@dataclass(frozen=True)
class OuterConfig:
    """Outer-loop settings.

    ``dr.residual_tol`` left as ``None`` means the inner residual check uses
    ``dr.tol``; pass ``inner_residual_check=False`` to stop the inner loop on
    the step size alone.
    """

    tol_eps1: float = 0.01
    max_outer_iters: int = 100
    dr: DrConfig = field(default_factory=DrConfig)
    period_adaptation: bool = False
    inner_residual_check: bool = True
    floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        if not self.tol_eps1 > 0:
            raise ValueError("tol_eps1 must be positive")
        if int(self.max_outer_iters) < 1:
            raise ValueError("max_outer_iters must be >= 1")


@dataclass
class SolveReport:
    solution: PeriodicSignal
    outer_iters: int
    per_outer_inner_iters: list[int]
    relative_change_history: list[float]
    residual_norm: float
    amplitude: float
    period_estimate: float
    converged: bool
    period_history: list[float] = field(default_factory=list)
    drift_history: list[float] = field(default_factory=list)

    @property
    def grid_period(self) -> float:
        return self.solution.grid.period

    def to_dict(self) -> dict:
        """JSON-ready summary; the waveform itself is left to the CSV writer."""
        return {
            "converged": bool(self.converged),
            "outer_iters": int(self.outer_iters),
            "per_outer_inner_iters": [int(v) for v in self.per_outer_inner_iters],
            "relative_change_history": [float(v) for v in self.relative_change_history],
            "residual_norm": float(self.residual_norm),
            "amplitude": float(self.amplitude),
            "period_estimate": float(self.period_estimate),
            "grid_period": float(self.grid_period),
            "num_samples": int(self.solution.grid.num_samples),
            "period_history": [float(v) for v in self.period_history],
            "drift_history": [float(v) for v in self.drift_history],
        }


class OuterNonConvergence(RuntimeError):
    def __init__(self, message: str, report: SolveReport):
        super().__init__(message)
        self.report = report


class BasinEscapeError(ValueError):
    """A scalar iterate left the interval it was required to stay in."""


# ---------------------------------------------------------------- helpers


def _up_crossings(x: np.ndarray, period: float) -> np.ndarray:
    sig = PeriodicSignal(PeriodicGrid(period, x.shape[0]), x)
    return np.asarray(zero_crossings(sig, "up"))


def period_from_crossings(x: PeriodicSignal) -> float:
    """Grid period divided by the number of cyclic up-crossings (NaN if none)."""
    n = len(zero_crossings(x, "up"))
    return x.grid.period / n if n else math.nan


def _wrap(d, period):
    return (d + 0.5 * period) % period - 0.5 * period


def _crossing_drift(new: np.ndarray, old: np.ndarray, period: float) -> float:
    """Mean time shift of the up-crossings of ``new`` relative to ``old``.

    Each crossing of ``new`` is paired with the nearest crossing of ``old``
    on the circle. A steady positive drift means the waveform is being
    delayed every iteration, which happens when the grid period is shorter
    than the natural one.
    """
    a = _up_crossings(old, period)
    b = _up_crossings(new, period)
    if a.size == 0 or b.size == 0:
        return 0.0
    d = _wrap(b[:, None] - a[None, :], period)
    return float(np.mean(d[np.arange(b.size), np.argmin(np.abs(d), axis=1)]))


def _aligned_change(new: np.ndarray, old: np.ndarray, floor: float) -> float:
    m, _ = best_cyclic_shift(old, new)
    return float(np.max(np.abs(np.roll(new, m) - old))) / max(float(np.max(np.abs(old))), floor)


class _PeriodController:
    """Secant search on the per-iteration crossing drift.

    A drift reading is trusted once the waveform has settled up to a time
    shift and two consecutive readings at the same period agree. The first
    move is a fixed fractional probe in the direction of the drift; later
    moves use the secant through the two most recent trusted readings.
    """

    def __init__(self, settle_gate=0.1, agreement=0.1, probe=0.05, max_step=0.2, min_step=1e-5):
        self.settle_gate = settle_gate
        self.agreement = agreement
        self.probe = probe
        self.max_step = max_step
        self.min_step = min_step
        self.points: list[tuple[float, float]] = []
        self.prev: Optional[float] = None

    def propose(self, period: float, drift: float, aligned: float) -> Optional[float]:
        settled = (
            aligned < self.settle_gate
            and self.prev is not None
            and abs(drift - self.prev) <= self.agreement * abs(drift)
        )
        self.prev = drift
        if not settled or drift == 0.0:
            return None
        self.points.append((period, drift))
        step = math.copysign(self.probe * period, drift)
        if len(self.points) >= 2:
            (t0, d0), (t1, d1) = self.points[-2:]
            if t1 != t0 and d1 != d0:
                slope = (d1 - d0) / (t1 - t0)
                if slope < 0:
                    step = -d1 / slope
        step = float(np.clip(step, -self.max_step * period, self.max_step * period))
        if abs(step) <= self.min_step * period:
            return None
        self.prev = None
        return period + step


# ------------------------------------------------------------ frozen solve


class _FrozenProblem:
    """Resolvents and residual for one grid; ``offset`` changes per outer step."""

    def __init__(self, system: MixedFeedbackSystem, grid: PeriodicGrid, cfg: OuterConfig):
        self.system = system
        self.grid = grid
        self.lam = cfg.dr.lam
        self.res1 = lti_resolvent_map(system.h_inverse, self.lam, grid)
        self.u = system.input_on(grid)
        self.coeffs = system.e1.coeffs
        self.e1 = system.e1.poly

    def shadow_start(self, y: np.ndarray, offset: np.ndarray) -> np.ndarray:
        # y - lam * F2(y); a zero of the frozen problem is then a DR fixed point
        return y - self.lam * (self.e1(y) - offset)

    def solve(self, y: np.ndarray, offset: np.ndarray, dr_cfg: DrConfig, rtol):
        lam = self.lam
        coeffs = self.coeffs

        def res2(z):
            return _solve_monotone_poly(coeffs, lam, z + lam * offset)

        def residual(ys, w):
            return float(np.linalg.norm((ys - w) / lam + self.e1(w) - offset))

        cfg = dr_cfg
        if rtol is not None:
            cfg = DrConfig(dr_cfg.lam, dr_cfg.tol, dr_cfg.max_iters, rtol, dr_cfg.floor)
        y0 = PeriodicSignal(self.grid, self.shadow_start(y, offset))
        return dr_solve(self.res1, res2, y0, cfg, residual if rtol is not None else None)


def _inner_rtol(cfg: OuterConfig):
    if not cfg.inner_residual_check:
        return None
    return cfg.dr.residual_tol if cfg.dr.residual_tol is not None else cfg.dr.tol


def forward_maps(system: MixedFeedbackSystem, grid: PeriodicGrid):
    """Single-valued forward maps ``(A, B)`` on sample arrays.

    ``A`` uses the minimum-norm element of ``H^{-1} y`` where the LTI relation
    is multivalued.
    """
    u = system.input_on(grid)

    def A(y):
        return apply_lti_min_norm(system.h_inverse, y, grid) + system.e1.poly(y) - u

    def B(y):
        return system.e2.poly(y)

    return A, B


def domain_projection(system: MixedFeedbackSystem, grid: PeriodicGrid):
    """Orthogonal projection onto the domain of ``H^{-1}`` on ``grid``.

    Removes the Fourier modes on which the LTI relation is multivalued (for
    ``(s^2+1)/s`` these are DC and, for even N, Nyquist).
    """
    mu1, mu2 = difference_eigenvalues(grid)
    den = system.h_inverse.denominator
    a = np.full(mu1.shape, den[0], dtype=complex)
    if len(den) > 1:
        a = a + den[1] * mu1
    if len(den) > 2:
        a = a + den[2] * mu2
    keep = np.abs(a) > SINGULAR_RATIO * np.abs(a).max()

    def P(y):
        yh = np.fft.rfft(y)
        return np.fft.irfft(np.where(keep, yh, 0.0), n=grid.num_samples)

    return P


def _residual_norm(system: MixedFeedbackSystem, y: PeriodicSignal) -> float:
    u = system.input_on(y.grid)
    rest = system.e1.poly(y.samples) - u - system.e2.poly(y.samples)
    return lti_inclusion_residual(system.h_inverse, y.samples, rest, y.grid)


def frozen_map(system: MixedFeedbackSystem, grid: PeriodicGrid, cfg: OuterConfig = OuterConfig()):
    """The map ``y -> A^{-1}(B(y))`` realized by one frozen inner solve."""
    prob = _FrozenProblem(system, grid, cfg)
    rtol = _inner_rtol(cfg)

    def T(y):
        y = np.asarray(y, dtype=float)
        offset = system.e2.poly(y) + prob.u
        return np.array(prob.solve(y, offset, cfg.dr, rtol).zero_candidate.samples)

    return T


def solve_mixed(
    system: MixedFeedbackSystem, y0: PeriodicSignal, cfg: OuterConfig = OuterConfig()
) -> SolveReport:
    """Find a periodic zero of ``A - B`` starting from ``y0``.

    Raises
    ------
    OuterNonConvergence
        The outer budget ran out; ``exc.report`` holds the last iterate.
    DrNonConvergence
        An inner solve failed; the message names the outer iteration.
    """
    grid = y0.grid
    prob = _FrozenProblem(system, grid, cfg)
    rtol = _inner_rtol(cfg)
    adapt = cfg.period_adaptation and system.autonomous
    ctrl = _PeriodController() if adapt else None

    y = np.array(y0.samples, dtype=float)
    inner_counts: list[int] = []
    changes: list[float] = []
    periods: list[float] = []
    drifts: list[float] = []
    converged = False
    for i in range(1, cfg.max_outer_iters + 1):
        offset = system.e2.poly(y) + prob.u
        try:
            dr = prob.solve(y, offset, cfg.dr, rtol)
        except DrNonConvergence as exc:
            raise DrNonConvergence(f"outer iteration {i}: {exc}", exc.result) from exc
        y_new = np.array(dr.zero_candidate.samples)
        change = float(np.max(np.abs(y_new - y))) / max(float(np.max(np.abs(y))), cfg.floor)
        inner_counts.append(dr.inner_iters)
        changes.append(change)
        periods.append(grid.period)
        if adapt:
            drifts.append(_crossing_drift(y_new, y, grid.period))
            aligned = _aligned_change(y_new, y, cfg.floor)
        y = y_new
        if change < cfg.tol_eps1:
            converged = True
            break
        if adapt:
            new_period = ctrl.propose(grid.period, drifts[-1], aligned)
            if new_period is not None:
                # same samples, stretched time axis
                grid = grid.with_period(new_period)
                prob = _FrozenProblem(system, grid, cfg)

    sol = PeriodicSignal(grid, y)
    report = SolveReport(
        solution=sol,
        outer_iters=len(changes),
        per_outer_inner_iters=inner_counts,
        relative_change_history=changes,
        residual_norm=_residual_norm(system, sol),
        amplitude=sol.amplitude,
        period_estimate=period_from_crossings(sol),
        converged=converged,
        period_history=periods,
        drift_history=drifts,
    )
    if not converged:
        raise OuterNonConvergence(
            f"outer loop did not converge in {cfg.max_outer_iters} iterations "
            f"(last relative change {changes[-1]:.3g})",
            report,
        )
    return report


# ------------------------------------------------------------------ scalar


def _invert_increasing(A, target: float, guess: float, xtol: float) -> float:
    """Solve ``A(x) = target`` for increasing ``A`` by bracket expansion and Brent."""
    f = lambda x: A(x) - target  # noqa: E731
    f0 = f(guess)
    if f0 == 0.0:
        return guess
    step = max(1.0, abs(guess))
    direction = -1.0 if f0 > 0 else 1.0
    lo = hi = guess
    for _ in range(200):
        hi = guess + direction * step
        if (f(hi) > 0) != (f0 > 0) or f(hi) == 0.0:
            break
        lo = hi
        step *= 2.0
    else:
        raise ArithmeticError(f"could not bracket A(x) = {target}")
    a, b = sorted((lo, hi))
    return brentq(f, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500)


def scalar_mixed_solve(
    A: Callable[[float], float],
    B: Callable[[float], float],
    x0: float,
    tol: float = 1e-10,
    max_iters: int = 1000,
    floor: float = DEFAULT_FLOOR,
    domain: Optional[tuple[float, float]] = None,
) -> tuple[float, int, list[float]]:
    """Iterate ``x_{i+1} = A^{-1}(B(x_i))`` for increasing scalar ``A``.

    Parameters
    ----------
    domain
        Interval the iterates must stay in. Defaults to the closed half-line
        holding ``x0`` (or the whole line for ``x0 = 0``), so an iterate that
        changes sign raises :class:`BasinEscapeError`.

    Returns
    -------
    x_star, iters, trajectory
        ``trajectory`` starts with ``x0``.
    """
    x = float(x0)
    if domain is None:
        domain = (0.0, math.inf) if x > 0 else (-math.inf, 0.0) if x < 0 else (-math.inf, math.inf)
    lo, hi = domain
    traj = [x]
    for i in range(1, max_iters + 1):
        x_next = _invert_increasing(A, B(x), x, xtol=1e-15 + 1e-3 * tol * max(abs(x), floor))
        if not lo <= x_next <= hi:
            raise BasinEscapeError(f"iterate {i} = {x_next:.6g} left [{lo}, {hi}]")
        traj.append(x_next)
        done = abs(x_next - x) / max(abs(x), floor) < tol
        x = x_next
        if done:
            return x, i, traj
    raise ArithmeticError(f"scalar iteration did not converge in {max_iters} iterations")


# ------------------------------------------------------------- contraction


@dataclass(frozen=True)
class ContractionReport:
    """Sampled contraction diagnostics.

    ``alpha_estimate`` is the smallest sampled coercivity ratio of A and
    ``beta_estimate`` the smallest sampled cocoercivity ratio of B; both are
    0 when the corresponding forward map was not supplied.
    """

    sampled_lipschitz_max: float
    alpha_estimate: float
    beta_estimate: float
    contraction_predicted: bool
    num_probes_used: int = 0
    failures: tuple[str, ...] = ()


class ContractionDiagnosticError(RuntimeError):
    pass


def _as_array(x):
    if isinstance(x, PeriodicSignal):
        return np.array(x.samples), x.grid
    return np.atleast_1d(np.asarray(x, dtype=float)).copy(), None


def estimate_contraction(
    map: Callable,
    center,
    radius: float,
    num_probes: int,
    rng_seed: int,
    A_forward: Optional[Callable] = None,
    B_forward: Optional[Callable] = None,
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> ContractionReport:
    """Largest sampled ratio ``|map(u) - map(v)| / |u - v|`` over random pairs.

    ``center`` may be a :class:`PeriodicSignal`, an array or a scalar; the
    maps receive the same kind of object. Pairs are drawn uniformly in the
    ball of the given radius and then passed through ``project`` if given
    (for instance :func:`domain_projection`). A probe whose map evaluation
    raises is recorded in ``failures`` and skipped.
    """
    if num_probes < 2:
        raise ValueError("num_probes must be >= 2")
    if not radius > 0:
        raise ValueError("radius must be positive")
    c, grid = _as_array(center)
    scalar = grid is None and np.ndim(center) == 0
    rng = np.random.default_rng(rng_seed)
    d = c.size

    def draw():
        v = rng.standard_normal(d)
        v *= radius * rng.random() ** (1.0 / d) / np.linalg.norm(v)
        return c + v

    def wrap(a):
        if grid is not None:
            return PeriodicSignal(grid, a)
        return float(a[0]) if scalar else a

    def unwrap(r):
        return _as_array(r)[0]

    pairs = [(draw(), draw()) for _ in range(num_probes)]
    if project is not None:
        pairs = [(project(u), project(v)) for u, v in pairs]
    ratios: list[float] = []
    alphas: list[float] = []
    betas: list[float] = []
    failures: list[str] = []
    for k, (u, v) in enumerate(pairs):
        duv = u - v
        n = float(np.linalg.norm(duv))
        if n == 0.0:
            continue
        try:
            mu, mv = unwrap(map(wrap(u))), unwrap(map(wrap(v)))
        except Exception as exc:  # noqa: BLE001 - any probe failure is reported, not fatal
            failures.append(f"probe {k}: {type(exc).__name__}: {exc}")
            continue
        ratios.append(float(np.linalg.norm(mu - mv)) / n)
        if A_forward is not None:
            da = unwrap(A_forward(wrap(u))) - unwrap(A_forward(wrap(v)))
            alphas.append(float(da @ duv) / n**2)
        if B_forward is not None:
            db = unwrap(B_forward(wrap(u))) - unwrap(B_forward(wrap(v)))
            nb = float(db @ db)
            if nb > 0:
                betas.append(float(db @ duv) / nb)
    if not ratios:
        raise ContractionDiagnosticError(
            "every probe failed: " + "; ".join(failures[:3])
        )
    lip = max(ratios)
    return ContractionReport(
        sampled_lipschitz_max=lip,
        alpha_estimate=min(alphas) if alphas else 0.0,
        beta_estimate=min(betas) if betas else 0.0,
        contraction_predicted=lip < 1.0,
        num_probes_used=len(ratios),
        failures=tuple(failures),
    )


# ------------------------------------------------------------------ period


@dataclass(frozen=True)
class PeriodAdaptation:
    grid: PeriodicGrid
    iterate: PeriodicSignal
    changed: bool
    warning: Optional[str] = None


def adapt_period(iterate: PeriodicSignal, grid: Optional[PeriodicGrid] = None) -> PeriodAdaptation:
    """Re-estimate the period from zero crossings inside one window.

    Twice the mean gap between consecutive sign changes is taken as the
    period. The crossing that straddles the end of the window is ignored,
    since a mismatched period makes the samples jump there. The iterate is
    resampled onto the new grid (same N) by periodic linear interpolation.
    Changes below 1% are ignored.
    """
    grid = iterate.grid if grid is None else grid
    if grid != iterate.grid:
        raise ValueError("iterate does not live on the given grid")
    last = (grid.num_samples - 1) * grid.step
    times = [t for t in zero_crossings(iterate) if t <= last]
    if len(times) < 2:
        return PeriodAdaptation(grid, iterate, False, "fewer than two zero crossings")
    new_period = 2.0 * float(np.mean(np.diff(times)))
    if abs(new_period - grid.period) < 0.01 * grid.period:
        return PeriodAdaptation(grid, iterate, False, None)
    new_grid = grid.with_period(new_period)
    vals = np.interp(new_grid.times, grid.times, iterate.samples, period=grid.period)
    return PeriodAdaptation(new_grid, PeriodicSignal(new_grid, vals), True, None)
