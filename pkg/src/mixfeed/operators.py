"""Maximal monotone relations on periodic signals and their resolvents.

Two families are provided:

* :class:`LtiRelation` -- a rational differential operator ``b(s)/a(s)``
  realized on the grid by substituting the periodic central differences
  ``D1`` for ``s`` and ``D2`` for ``s**2``. Both are circulant, so every
  solve is diagonal in the discrete Fourier basis.
* :class:`StaticPolyRelation` / :class:`GainRelation` -- memoryless maps
  applied sample by sample.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .signal import PeriodicGrid, PeriodicSignal

__all__ = [
    "ResonanceError",
    "MonotonicityError",
    "LtiRelation",
    "StaticPolyRelation",
    "GainRelation",
    "difference_eigenvalues",
    "apply_lti",
    "resolvent_lti",
    "lti_resolvent_map",
    "dense_resolvent_lti",
    "difference_matrices",
    "apply_lti_min_norm",
    "lti_inclusion_residual",
    "resolvent_static",
    "MonotonicityReport",
    "empirical_monotonicity_check",
]

SINGULAR_RATIO = 1e-10
MAX_LTI_DEGREE = 2


class ResonanceError(ArithmeticError):
    """A circulant LTI system is (near-)singular at some discrete frequency."""

    def __init__(self, message: str, frequency: float, mode: int):
        super().__init__(message)
        self.frequency = frequency
        self.mode = mode


class MonotonicityError(ValueError):
    """A static relation is not monotone where it is being used."""


def _trim(coeffs: Sequence[float]) -> tuple[float, ...]:
    c = [float(v) for v in coeffs]
    if not c:
        raise ValueError("coefficient list is empty")
    if not all(math.isfinite(v) for v in c):
        raise ValueError("coefficients must be finite")
    return tuple(c)


@dataclass(frozen=True)
class LtiRelation:
    """``y = (b(s)/a(s)) x``; coefficient lists are in ascending powers of s."""

    numerator: tuple[float, ...]
    denominator: tuple[float, ...]

    def __post_init__(self):
        num = _trim(self.numerator)
        den = _trim(self.denominator)
        for name, c in (("numerator", num), ("denominator", den)):
            if len(c) - 1 > MAX_LTI_DEGREE:
                raise ValueError(f"{name} degree {len(c) - 1} exceeds {MAX_LTI_DEGREE}")
            if c[-1] == 0.0:
                raise ValueError(f"{name} leading coefficient must be nonzero")
        object.__setattr__(self, "numerator", num)
        object.__setattr__(self, "denominator", den)

    def inverse(self) -> "LtiRelation":
        return LtiRelation(self.denominator, self.numerator)


def difference_eigenvalues(grid: PeriodicGrid) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues of D1 and D2 on the rfft modes ``k = 0 .. N//2``."""
    n = grid.num_samples
    h = grid.step
    theta = 2.0 * np.pi * np.arange(n // 2 + 1) / n
    mu1 = 1j * np.sin(theta) / h
    mu2 = -4.0 * np.sin(theta / 2.0) ** 2 / (h * h)
    return mu1, mu2


def _poly_eig(coeffs: Sequence[float], mu1: np.ndarray, mu2: np.ndarray) -> np.ndarray:
    out = np.full(mu1.shape, coeffs[0], dtype=complex)
    if len(coeffs) > 1:
        out = out + coeffs[1] * mu1
    if len(coeffs) > 2:
        out = out + coeffs[2] * mu2
    return out


def _check_singular(eig: np.ndarray, grid: PeriodicGrid, what: str):
    mag = np.abs(eig)
    scale = mag.max()
    bad = np.flatnonzero(mag <= SINGULAR_RATIO * scale) if scale > 0 else np.arange(mag.size)
    if bad.size:
        k = int(bad[0])
        freq = 2.0 * np.pi * k / grid.period
        raise ResonanceError(
            f"{what} is singular at discrete mode {k} (frequency {freq:.6g} rad/s)",
            frequency=freq,
            mode=k,
        )


def _spectral_apply(mult: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.fft.irfft(mult * np.fft.rfft(x), n=x.shape[-1])


def apply_lti(op: LtiRelation, x: PeriodicSignal) -> PeriodicSignal:
    """Solve ``a(D) w = b(D) x`` for ``w``."""
    mu1, mu2 = difference_eigenvalues(x.grid)
    a = _poly_eig(op.denominator, mu1, mu2)
    b = _poly_eig(op.numerator, mu1, mu2)
    _check_singular(a, x.grid, "denominator a(D)")
    return PeriodicSignal(x.grid, _spectral_apply(b / a, x.samples))


def lti_resolvent_map(
    op: LtiRelation, lam: float, grid: PeriodicGrid
) -> Callable[[np.ndarray], np.ndarray]:
    """Precompute ``(I + lam * b/a)^{-1}`` on ``grid`` as a map on sample arrays.

    The map solves ``(a(D) + lam b(D)) w = a(D) z``; the Fourier multiplier
    is built once and reused by every call.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    mu1, mu2 = difference_eigenvalues(grid)
    a = _poly_eig(op.denominator, mu1, mu2)
    b = _poly_eig(op.numerator, mu1, mu2)
    lhs = a + lam * b
    _check_singular(lhs, grid, "resolvent system a(D) + lambda b(D)")
    mult = a / lhs

    def res(z: np.ndarray) -> np.ndarray:
        return _spectral_apply(mult, z)

    return res


def resolvent_lti(op: LtiRelation, lam: float, z: PeriodicSignal) -> PeriodicSignal:
    return PeriodicSignal(z.grid, lti_resolvent_map(op, lam, z.grid)(z.samples))


def difference_matrices(grid: PeriodicGrid) -> tuple[np.ndarray, np.ndarray]:
    """Dense circulant D1 and D2 (reference path, small N only)."""
    n = grid.num_samples
    h = grid.step
    eye = np.eye(n)
    up = np.roll(eye, 1, axis=1)  # (up @ x)[k] = x[k+1]
    down = np.roll(eye, -1, axis=1)  # (down @ x)[k] = x[k-1]
    d1 = (up - down) / (2.0 * h)
    d2 = (up - 2.0 * eye + down) / (h * h)
    return d1, d2


def _poly_matrix(coeffs, d1, d2):
    out = coeffs[0] * np.eye(d1.shape[0])
    if len(coeffs) > 1:
        out = out + coeffs[1] * d1
    if len(coeffs) > 2:
        out = out + coeffs[2] * d2
    return out


def dense_resolvent_lti(op: LtiRelation, lam: float, z: PeriodicSignal) -> PeriodicSignal:
    """Same contract as :func:`resolvent_lti`, via a dense direct solve."""
    d1, d2 = difference_matrices(z.grid)
    a = _poly_matrix(op.denominator, d1, d2)
    b = _poly_matrix(op.numerator, d1, d2)
    w = np.linalg.solve(a + lam * b, a @ z.samples)
    return PeriodicSignal(z.grid, w)


def apply_lti_min_norm(op: LtiRelation, x: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Minimum-norm element of the relation image ``(b/a)(D) x``.

    Modes where ``a(D)`` vanishes contribute zero, provided ``b(D) x`` also
    vanishes there; otherwise ``x`` is outside the domain and a
    :class:`ResonanceError` is raised.
    """
    mu1, mu2 = difference_eigenvalues(grid)
    a = _poly_eig(op.denominator, mu1, mu2)
    b = _poly_eig(op.numerator, mu1, mu2)
    xh = np.fft.rfft(x)
    regular = np.abs(a) > SINGULAR_RATIO * np.abs(a).max()
    out = np.zeros_like(xh)
    out[regular] = b[regular] / a[regular] * xh[regular]
    sing = np.flatnonzero(~regular)
    if sing.size:
        bx = np.abs(b[sing] * xh[sing])
        scale = max(np.abs(xh).max(), 1.0) * np.abs(b).max()
        bad = sing[bx > 1e-9 * scale]
        if bad.size:
            k = int(bad[0])
            freq = 2.0 * np.pi * k / grid.period
            raise ResonanceError(
                f"signal has a component at mode {k} ({freq:.6g} rad/s) outside the relation's domain",
                frequency=freq,
                mode=k,
            )
    return np.fft.irfft(out, n=grid.num_samples)


def lti_inclusion_residual(
    op: LtiRelation, x: np.ndarray, rest: np.ndarray, grid: PeriodicGrid
) -> float:
    """Distance from 0 to ``op(x) + rest``.

    ``op`` may be a genuine relation (``a(D)`` singular on some modes, as for
    ``(s^2+1)/s`` at DC). On such a mode the image is the whole line when
    ``b(D) x`` vanishes there, so that mode contributes nothing; otherwise ``x``
    is outside the domain and the distance is infinite.
    """
    mu1, mu2 = difference_eigenvalues(grid)
    a = _poly_eig(op.denominator, mu1, mu2)
    b = _poly_eig(op.numerator, mu1, mu2)
    xh = np.fft.rfft(x)
    rh = np.fft.rfft(rest)
    regular = np.abs(a) > SINGULAR_RATIO * np.abs(a).max()
    out = np.zeros_like(xh)
    out[regular] = b[regular] / a[regular] * xh[regular] + rh[regular]
    sing = ~regular
    if np.any(sing):
        bx = np.abs(b[sing] * xh[sing])
        scale = max(np.abs(xh).max(), 1.0) * np.abs(b).max()
        if np.any(bx > 1e-9 * scale):
            return math.inf
    return float(np.linalg.norm(np.fft.irfft(out, n=grid.num_samples)))


@dataclass(frozen=True)
class StaticPolyRelation:
    """``x -> p(x) - offset`` applied sample by sample.

    ``coeffs`` are ascending powers. ``domain`` is the interval on which
    ``p`` must be nondecreasing; it is checked at construction.
    """

    coeffs: tuple[float, ...]
    offset: Optional[PeriodicSignal] = field(default=None, compare=False)
    domain: tuple[float, float] = (-math.inf, math.inf)

    def __post_init__(self):
        c = list(_trim(self.coeffs))
        while len(c) > 1 and c[-1] == 0.0:
            c.pop()
        object.__setattr__(self, "coeffs", tuple(c))
        lo, hi = self.domain
        if not lo < hi:
            raise ValueError(f"empty domain {self.domain}")
        if not _nondecreasing_on(np.array(c), float(lo), float(hi)):
            raise MonotonicityError(
                f"polynomial {c} is not nondecreasing on [{lo}, {hi}]"
            )

    def with_offset(self, offset: Optional[PeriodicSignal]) -> "StaticPolyRelation":
        return StaticPolyRelation(self.coeffs, offset, self.domain)

    @property
    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.coeffs)

    def poly(self, x):
        return P.polyval(x, self.coeffs)

    def slope(self, x):
        return P.polyval(x, P.polyder(self.coeffs)) if len(self.coeffs) > 1 else np.zeros_like(x)

    def apply(self, x: PeriodicSignal) -> PeriodicSignal:
        out = self.poly(x.samples)
        if self.offset is not None:
            out = out - self.offset.samples
        return PeriodicSignal(x.grid, out)


def _nondecreasing_on(c: np.ndarray, lo: float, hi: float) -> bool:
    if len(c) <= 1:
        return True
    dc = P.polyder(c)
    dc_trim = np.trim_zeros(dc, "b")
    if dc_trim.size == 0:
        return True
    deg = dc_trim.size - 1
    lead = dc_trim[-1]
    # behaviour at infinite ends is decided by the leading term of p'
    if math.isinf(hi) and lead < 0:
        return False
    if math.isinf(lo) and (lead < 0 if deg % 2 == 0 else lead > 0):
        return False
    pts = []
    if deg >= 1:
        for r in P.polyroots(dc_trim):
            if abs(r.imag) < 1e-9 and lo <= r.real <= hi:
                pts.append(r.real)
    for end in (lo, hi):
        if math.isfinite(end):
            pts.append(end)
    if not pts:
        pts = [0.0]
    pts = sorted(pts)
    probe = list(pts)
    probe += [0.5 * (u + v) for u, v in zip(pts, pts[1:])]
    vals = P.polyval(np.array(probe), dc_trim)
    scale = max(np.abs(dc_trim).max(), 1.0)
    return bool(np.all(vals >= -1e-9 * scale))


@dataclass(frozen=True)
class GainRelation:
    """``x -> gain * x``; monotone iff ``gain >= 0``."""

    gain: float

    @property
    def coeffs(self) -> tuple[float, ...]:
        return (0.0, float(self.gain))

    def apply(self, x: PeriodicSignal) -> PeriodicSignal:
        return PeriodicSignal(x.grid, self.gain * x.samples)

    def poly(self, x):
        return self.gain * np.asarray(x)


def _solve_monotone_poly(coeffs, lam: float, c: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Samplewise root of ``w + lam * p(w) = c`` for nondecreasing ``p``."""
    coeffs = np.asarray(coeffs, dtype=float)
    dcoeffs = P.polyder(coeffs) if coeffs.size > 1 else np.zeros(1)
    pc = P.polyval(c, coeffs)
    # g(w) = w + lam p(w) - c is increasing with g(c) = lam p(c), so the root
    # lies between c and c - lam p(c)
    other = c - lam * pc
    lo = np.minimum(c, other)
    hi = np.maximum(c, other)

    def g(w):
        return w + lam * P.polyval(w, coeffs) - c

    glo = g(lo)
    ghi = g(hi)
    slack = 1e-9 * (1.0 + np.abs(c))
    if np.any(glo > slack) or np.any(ghi < -slack):
        raise MonotonicityError("resolvent root is not bracketed; relation is not monotone here")

    w = other.copy()
    for _ in range(200):
        gw = g(w)
        thr = np.maximum(tol, 8.0 * np.finfo(float).eps * (np.abs(c) + np.abs(w)))
        done = np.abs(gw) <= thr
        if np.all(done):
            break
        neg = gw < 0
        lo = np.where(neg, w, lo)
        hi = np.where(neg, hi, w)
        dg = 1.0 + lam * P.polyval(w, dcoeffs)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = w - gw / dg
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi) | (dg <= 0)
        step = np.where(bad, 0.5 * (lo + hi), step)
        w = np.where(done, w, step)
        if np.all(done | (hi - lo <= 4.0 * np.finfo(float).eps * (1.0 + np.abs(w)))):
            break
    return w


def resolvent_static(
    op: StaticPolyRelation | GainRelation, lam: float, z: PeriodicSignal
) -> PeriodicSignal:
    """Solve ``w + lam * (p(w) - offset) = z`` independently at every sample."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    c = np.array(z.samples, dtype=float)
    offset = getattr(op, "offset", None)
    if offset is not None:
        if offset.grid != z.grid:
            raise ValueError("offset signal lives on a different grid")
        c = c + lam * offset.samples
    if isinstance(op, GainRelation):
        if 1.0 + lam * op.gain <= 0:
            raise MonotonicityError(f"gain {op.gain} too negative for lambda {lam}")
        return PeriodicSignal(z.grid, c / (1.0 + lam * op.gain))
    if op.is_zero:
        return PeriodicSignal(z.grid, c)
    return PeriodicSignal(z.grid, _solve_monotone_poly(op.coeffs, lam, c))


@dataclass
class MonotonicityReport:
    min_product: float
    violating_pair: Optional[tuple[int, int]]
    alpha_estimate: float
    beta_estimate: float
    num_pairs: int

    @property
    def monotone(self) -> bool:
        return self.violating_pair is None


def _as_array(v) -> np.ndarray:
    if isinstance(v, PeriodicSignal):
        return v.samples
    return np.atleast_1d(np.asarray(v, dtype=float))


def empirical_monotonicity_check(relation_apply, domain_samples) -> MonotonicityReport:
    """Evaluate ``<u1 - u2, R(u1) - R(u2)>`` over all pairs of samples.

    ``alpha_estimate`` is the smallest product / ``|u1 - u2|^2`` (coercivity)
    and ``beta_estimate`` the smallest product / ``|R(u1) - R(u2)|^2``
    (cocoercivity); pairs with zero output difference are skipped for the
    latter.
    """
    samples = list(domain_samples)
    if len(samples) < 2:
        raise ValueError("need at least two domain samples")
    xs = [_as_array(s) for s in samples]
    ys = [_as_array(relation_apply(s)) for s in samples]

    min_prod = math.inf
    worst = None
    alpha = math.inf
    beta = math.inf
    pairs = 0
    for i, j in itertools.combinations(range(len(xs)), 2):
        du = xs[i] - xs[j]
        dr = ys[i] - ys[j]
        nu = float(du @ du)
        if nu == 0.0:
            continue
        pairs += 1
        prod = float(du @ dr)
        nr = float(dr @ dr)
        if prod < min_prod:
            min_prod = prod
            worst = (i, j)
        alpha = min(alpha, prod / nu)
        if nr > 0:
            beta = min(beta, prod / nr)

    violating = None
    if pairs and min_prod < 0:
        du = xs[worst[0]] - xs[worst[1]]
        dr = ys[worst[0]] - ys[worst[1]]
        if min_prod < -1e-12 * math.sqrt(float(du @ du) * float(dr @ dr)):
            violating = worst
    return MonotonicityReport(min_prod, violating, alpha, beta, pairs)
