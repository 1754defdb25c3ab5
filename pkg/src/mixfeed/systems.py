"""Built-in mixed-feedback systems and the system-definition file format.

A system is the triple (H, E1, E2) plus an external input u. Its periodic
solutions are the zeros of ``A(y) - B(y)`` with

    A(y) = H^{-1} y + E1(y) - u,      B(y) = E2(y).

System files are TOML::

    label = "van der pol, K = 1.5"

    [lti]                 # H^{-1} = numerator / denominator, ascending powers of s
    numerator = [1.0, 0.0, 1.0]
    denominator = [0.0, 1.0]

    [e1]                  # negative feedback polynomial, ascending powers
    coeffs = [0.0, 0.0, 0.0, 0.5]

    [e2]                  # positive feedback polynomial, ascending powers
    coeffs = [0.0, 1.5]

    [input]               # optional
    kind = "zero"         # or "sine" (amplitude, frequency in rad/s) or "file" (path)
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .operators import (
    GainRelation,
    LtiRelation,
    MonotonicityError,
    StaticPolyRelation,
    empirical_monotonicity_check,
)
from .signal import PeriodicGrid, PeriodicSignal, read_csv

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = [
    "MixedFeedbackSystem",
    "VdpParams",
    "van_der_pol",
    "ScalarProblem",
    "double_well",
    "period_guess",
    "describing_function_baseline",
    "initial_guess_ramp",
    "default_lambda",
    "SystemFileError",
    "load_system",
]

MAX_POLY_DEGREE = 7
RELAXATION_SLOPE = 3.0 - 2.0 * math.log(2.0)

InputSpec = Union[None, PeriodicSignal, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class MixedFeedbackSystem:
    h_inverse: LtiRelation
    e1: StaticPolyRelation
    e2: Union[GainRelation, StaticPolyRelation]
    external_input: InputSpec = field(default=None, compare=False)
    label: str = ""
    operating_interval: tuple[float, float] = (-5.0, 5.0)

    def __post_init__(self):
        lo, hi = self.operating_interval
        probes = np.linspace(lo, hi, 21)
        for name, rel in (("e1", self.e1), ("e2", self.e2)):
            rep = empirical_monotonicity_check(rel.poly, probes)
            if not rep.monotone:
                raise MonotonicityError(
                    f"{name} is not monotone on [{lo}, {hi}] "
                    f"(pair {rep.violating_pair}, product {rep.min_product:.3g})"
                )

    @property
    def autonomous(self) -> bool:
        return self.external_input is None

    def input_on(self, grid: PeriodicGrid) -> np.ndarray:
        u = self.external_input
        if u is None:
            return np.zeros(grid.num_samples)
        if isinstance(u, PeriodicSignal):
            # CSV round trips keep 12 digits, so compare periods loosely
            if u.grid.num_samples != grid.num_samples or not math.isclose(
                u.grid.period, grid.period, rel_tol=1e-9
            ):
                raise ValueError("external input is defined on a different grid")
            return np.array(u.samples)
        return np.asarray(u(grid.times), dtype=float)

    def positive_feedback(self, y: np.ndarray) -> np.ndarray:
        return self.e2.poly(y)


@dataclass(frozen=True)
class VdpParams:
    K: float
    grid: Optional[PeriodicGrid] = None

    def __post_init__(self):
        if not self.K >= 0:
            raise ValueError(f"K must be nonnegative, got {self.K}")


def van_der_pol(params: VdpParams | float) -> MixedFeedbackSystem:
    """``x'' + K (x^2 - 1) x' + x = 0`` as ``A(x) = (s^2+1)/s x + K x^3/3``, ``B(x) = K x``."""
    if not isinstance(params, VdpParams):
        params = VdpParams(float(params))
    K = float(params.K)
    return MixedFeedbackSystem(
        h_inverse=LtiRelation((1.0, 0.0, 1.0), (0.0, 1.0)),
        e1=StaticPolyRelation((0.0, 0.0, 0.0, K / 3.0)),
        e2=GainRelation(K),
        label=f"van der pol, K={K:g}",
    )


@dataclass(frozen=True)
class ScalarProblem:
    A: Callable[[float], float]
    B: Callable[[float], float]
    objective: Callable[[float], float]
    roots: tuple[float, ...]


def double_well() -> ScalarProblem:
    """Critical points of ``x^4/12 - x^2/2``, i.e. zeros of ``x^3/3 - x``."""
    r = math.sqrt(3.0)
    return ScalarProblem(
        A=lambda x: x**3 / 3.0,
        B=lambda x: x,
        objective=lambda x: x**4 / 12.0 - x**2 / 2.0,
        roots=(-r, 0.0, r),
    )


def period_guess(K: float) -> float:
    """Starting period: ``2 pi`` in the near-sinusoidal regime, else the relaxation asymptote.

    ``max(2 pi, (3 - 2 ln 2) K)``. At K = 10 this underestimates the true
    period (about 19.08) by ~15%, which period adaptation absorbs.
    """
    if K < 0:
        raise ValueError("K must be nonnegative")
    return max(2.0 * math.pi, RELAXATION_SLOPE * K)


def describing_function_baseline(K: float) -> tuple[float, float]:
    """Harmonic-balance prediction for the Van der Pol cycle: amplitude 2 at 1 rad/s, for any K."""
    return (2.0, 1.0)


def default_lambda(K: float) -> float:
    return 0.01 if K >= 5.0 else 0.05


def initial_guess_ramp(grid: PeriodicGrid, slope: float = 1.0) -> PeriodicSignal:
    return PeriodicSignal(grid, slope * grid.times)


class SystemFileError(ValueError):
    pass


def _key_line(text: str, section: str, key: str) -> Optional[int]:
    cur = ""
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            cur = m.group(1).strip()
            continue
        if cur == section and re.match(rf"^{re.escape(key)}\s*=", s):
            return n
    return None


def _fail(path, text, section, key, msg):
    line = _key_line(text, section, key)
    where = f"line {line}, " if line else ""
    name = f"{section}.{key}" if section else key
    raise SystemFileError(f"{path}: {where}key '{name}': {msg}")


def _coeffs(path, text, table, section, key, max_degree):
    if key not in table:
        _fail(path, text, section, key, "missing")
    val = table[key]
    if not isinstance(val, list) or not val or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in val
    ):
        _fail(path, text, section, key, "expected a non-empty array of numbers")
    if len(val) - 1 > max_degree:
        _fail(path, text, section, key, f"degree {len(val) - 1} exceeds {max_degree}")
    return tuple(float(v) for v in val)


def load_system(path) -> MixedFeedbackSystem:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise SystemFileError(f"{path}: {exc}") from None

    for sec in ("lti", "e1", "e2"):
        if not isinstance(doc.get(sec), dict):
            raise SystemFileError(f"{path}: missing section [{sec}]")
    lti = doc["lti"]
    num = _coeffs(path, text, lti, "lti", "numerator", 2)
    den = _coeffs(path, text, lti, "lti", "denominator", 2)
    try:
        h_inv = LtiRelation(num, den)
    except ValueError as exc:
        _fail(path, text, "lti", "denominator", str(exc))

    relations = {}
    for sec in ("e1", "e2"):
        c = _coeffs(path, text, doc[sec], sec, "coeffs", MAX_POLY_DEGREE)
        dom = doc[sec].get("domain", [-math.inf, math.inf])
        try:
            relations[sec] = StaticPolyRelation(c, domain=(float(dom[0]), float(dom[1])))
        except (ValueError, IndexError, TypeError) as exc:
            _fail(path, text, sec, "coeffs", str(exc))

    e2 = relations["e2"]
    if len(e2.coeffs) == 2 and e2.coeffs[0] == 0.0:
        e2 = GainRelation(e2.coeffs[1])

    u: InputSpec = None
    inp = doc.get("input", {"kind": "zero"})
    kind = inp.get("kind", "zero")
    if kind == "zero":
        u = None
    elif kind == "sine":
        for k in ("amplitude", "frequency"):
            if not isinstance(inp.get(k), (int, float)):
                _fail(path, text, "input", k, "expected a number")
        amp, freq = float(inp["amplitude"]), float(inp["frequency"])
        u = lambda t: amp * np.sin(freq * t)  # noqa: E731
    elif kind == "file":
        if not isinstance(inp.get("path"), str):
            _fail(path, text, "input", "path", "expected a string")
        u = read_csv(path.parent / inp["path"])
    else:
        _fail(path, text, "input", "kind", f"unknown input kind {kind!r}")

    try:
        return MixedFeedbackSystem(
            h_inverse=h_inv,
            e1=relations["e1"],
            e2=e2,
            external_input=u,
            label=str(doc.get("label", path.stem)),
        )
    except MonotonicityError as exc:
        raise SystemFileError(f"{path}: {exc}") from None
