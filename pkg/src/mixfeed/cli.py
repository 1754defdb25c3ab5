"""Command-line front end.

Subcommands ``solve``, ``oracle``, ``compare`` and ``scalar``. Every run
writes its artifacts into ``--out-dir``. Exit status:

    0  success
    1  invalid configuration or input file
    2  non-convergence (artifacts are still written)
    3  resonance in an LTI solve, or oracle divergence
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .mixed_solver import (
    BasinEscapeError,
    OuterConfig,
    OuterNonConvergence,
    SolveReport,
    domain_projection,
    estimate_contraction,
    forward_maps,
    frozen_map,
    scalar_mixed_solve,
    solve_mixed,
)
from .operators import MonotonicityError, ResonanceError
from .oracle import DivergenceError, TransientError, compare_waveforms, extract_limit_cycle, integrate_vdp
from .signal import PeriodicGrid, PeriodicSignal, read_csv, write_csv
from .splitting import DrConfig, DrNonConvergence
from .systems import (
    MixedFeedbackSystem,
    SystemFileError,
    default_lambda,
    describing_function_baseline,
    double_well,
    initial_guess_ramp,
    load_system,
    period_guess,
    van_der_pol,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_RESONANCE = 0, 1, 2, 3
COMPARE_RMS_LIMIT = 0.05
BUILTIN_SYSTEMS = ("vdp",)


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class RunConfig:
    command: str
    system: str = "vdp"
    K: float = 1.5
    N: int = 5000
    lam: Optional[float] = None
    eps1: float = 0.01
    eps2: float = 0.01
    period: Union[str, float] = "auto"
    init: str = "ramp:1"
    adapt_period: Optional[bool] = None
    out_dir: str = "out"
    seed: int = 0
    max_outer: int = 100
    max_inner: int = 10000
    probes: int = 0
    step: float = 1e-4
    t_end: Optional[float] = None
    initial_state: tuple[float, float] = (2.0, 0.0)
    tol: float = 1e-10

    def __post_init__(self):
        if self.command not in ("solve", "oracle", "compare", "scalar"):
            raise ConfigError("command", f"unknown command {self.command!r}")
        for name in ("eps1", "eps2", "step", "tol"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(name, f"must be a positive number, got {v!r}")
        if not (math.isfinite(self.K) and self.K >= 0):
            raise ConfigError("K", f"must be a nonnegative number, got {self.K!r}")
        if self.lam is not None and not (math.isfinite(self.lam) and self.lam > 0):
            raise ConfigError("lambda", f"must be positive, got {self.lam!r}")
        if self.t_end is not None and not (math.isfinite(self.t_end) and self.t_end > 0):
            raise ConfigError("t_end", f"must be positive, got {self.t_end!r}")
        for name, lo in (("N", 4), ("max_outer", 1), ("max_inner", 1), ("probes", 0)):
            v = getattr(self, name)
            if not isinstance(v, int) or v < lo:
                raise ConfigError(name, f"must be an integer >= {lo}, got {v!r}")
        if self.period != "auto" and not (
            isinstance(self.period, float) and math.isfinite(self.period) and self.period > 0
        ):
            raise ConfigError("period", f"must be 'auto' or a positive number, got {self.period!r}")
        if self.probes == 1:
            raise ConfigError("probes", "needs at least 2 probes (or 0 to skip)")

    @property
    def effective_lambda(self) -> float:
        return self.lam if self.lam is not None else default_lambda(self.K)

    @property
    def effective_adapt(self) -> bool:
        return self.adapt_period if self.adapt_period is not None else self.period == "auto"

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        d["lambda"] = d.pop("lam")
        d["initial_state"] = list(self.initial_state)
        d["effective_lambda"] = self.effective_lambda
        d["effective_adapt_period"] = self.effective_adapt
        return d


# ----------------------------------------------------------------- parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("arguments", message)


def _positive_or_auto(text: str):
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or a number, got {text!r}") from None


def _state(text: str):
    try:
        x, v = (float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'x,v', got {text!r}") from None
    return (x, v)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML file whose keys match the long flag names")
    common.add_argument("--system", help="builtin name (vdp) or path to a system file")
    common.add_argument("--K", type=float, help="Van der Pol nonlinearity")
    common.add_argument("--N", type=int, help="samples per period")
    common.add_argument("--lambda", dest="lam", type=float, help="resolvent step (default by K)")
    common.add_argument("--eps1", type=float, help="outer tolerance")
    common.add_argument("--eps2", type=float, help="inner tolerance")
    common.add_argument("--period", type=_positive_or_auto, help="grid period or 'auto'")
    common.add_argument("--init", help="ramp:<slope> | zero | file:<path>; a number for 'scalar'")
    common.add_argument(
        "--adapt-period", dest="adapt_period", action=argparse.BooleanOptionalAction, default=None,
        help="adjust the grid period during the solve (default: on with --period auto)",
    )
    common.add_argument("--out-dir", dest="out_dir", help="artifact directory")
    common.add_argument("--seed", type=int, help="seed for contraction probes")
    common.add_argument("--max-outer", dest="max_outer", type=int)
    common.add_argument("--max-inner", dest="max_inner", type=int)
    common.add_argument("--probes", type=int, help="contraction probe pairs (0 skips)")
    common.add_argument("--step", type=float, help="oracle RK4 step")
    common.add_argument("--t-end", dest="t_end", type=float, help="oracle horizon")
    common.add_argument("--initial-state", dest="initial_state", type=_state, help="oracle x,v")
    common.add_argument("--tol", type=float, help="scalar stopping tolerance")

    parser = _Parser(prog="mixfeed", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("solve", "periodic solve by mixed-monotone splitting"),
        ("oracle", "RK4 reference limit cycle"),
        ("compare", "solver vs oracle vs describing function"),
        ("scalar", "double-well scalar iteration"),
    ):
        sub.add_parser(name, parents=[common], help=text)
    return parser


_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def _from_file(path: str) -> dict:
    try:
        doc = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError("config", str(exc)) from None
    out = {}
    for key, val in doc.items():
        name = {"lambda": "lam"}.get(key, key.replace("-", "_"))
        if name not in _FIELDS or name == "command":
            raise ConfigError(key, "unknown key in config file")
        out[name] = val
    if "period" in out and out["period"] != "auto":
        out["period"] = float(out["period"])
    if "initial_state" in out:
        out["initial_state"] = tuple(float(v) for v in out["initial_state"])
    return out


def parse_config(argv) -> RunConfig:
    args = vars(build_parser().parse_args(argv))
    values = _from_file(args["config"]) if args.get("config") else {}
    values.update({k: v for k, v in args.items() if k in _FIELDS and v is not None})
    if args["command"] == "scalar" and "init" not in values:
        values["init"] = "0.3"
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None


# ----------------------------------------------------------------- helpers


def _clean(obj):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def dump_json(obj, path: Path) -> None:
    text = json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8", newline="\n")


def _system(cfg: RunConfig) -> MixedFeedbackSystem:
    if cfg.system in BUILTIN_SYSTEMS:
        return van_der_pol(cfg.K)
    path = Path(cfg.system)
    if not path.is_file():
        raise ConfigError("system", f"not a builtin ({', '.join(BUILTIN_SYSTEMS)}) or a file: {cfg.system}")
    return load_system(path)


def _grid(cfg: RunConfig) -> PeriodicGrid:
    if cfg.period == "auto":
        T = period_guess(cfg.K) if cfg.system in BUILTIN_SYSTEMS else 2.0 * math.pi
    else:
        T = cfg.period
    return PeriodicGrid(T, cfg.N)


def _initial(cfg: RunConfig, grid: PeriodicGrid) -> PeriodicSignal:
    spec = cfg.init
    if spec == "zero":
        return PeriodicSignal.zeros(grid)
    if spec.startswith("ramp:"):
        try:
            slope = float(spec[5:])
        except ValueError:
            raise ConfigError("init", f"bad ramp slope in {spec!r}") from None
        return initial_guess_ramp(grid, slope)
    if spec.startswith("file:"):
        try:
            sig = read_csv(spec[5:])
        except (OSError, ValueError) as exc:
            raise ConfigError("init", str(exc)) from None
        if sig.grid.num_samples != grid.num_samples:
            raise ConfigError("init", f"file has {sig.grid.num_samples} samples, N is {grid.num_samples}")
        return sig.on_grid(grid)
    raise ConfigError("init", f"expected ramp:<slope>, zero or file:<path>, got {spec!r}")


def _outer_config(cfg: RunConfig) -> OuterConfig:
    return OuterConfig(
        tol_eps1=cfg.eps1,
        max_outer_iters=cfg.max_outer,
        dr=DrConfig(lam=cfg.effective_lambda, tol=cfg.eps2, max_iters=cfg.max_inner),
        period_adaptation=cfg.effective_adapt,
    )


def _run_solve(cfg: RunConfig):
    """Returns (report or None, error message or None, exit code)."""
    system = _system(cfg)
    grid = _grid(cfg)
    y0 = _initial(cfg, grid)
    try:
        return solve_mixed(system, y0, _outer_config(cfg)), None, EXIT_OK, system
    except OuterNonConvergence as exc:
        return exc.report, str(exc), EXIT_NONCONVERGED, system
    except DrNonConvergence as exc:
        return None, str(exc), EXIT_NONCONVERGED, system


def _contraction(cfg: RunConfig, system, report: SolveReport) -> Optional[dict]:
    if cfg.probes == 0:
        return None
    grid = report.solution.grid
    A, B = forward_maps(system, grid)
    rep = estimate_contraction(
        frozen_map(system, grid, _outer_config(cfg)),
        report.solution.samples,
        radius=0.05 * max(report.amplitude, 1e-3) * math.sqrt(grid.num_samples),
        num_probes=cfg.probes,
        rng_seed=cfg.seed,
        A_forward=A,
        B_forward=B,
        project=domain_projection(system, grid),
    )
    return dataclasses.asdict(rep)


# ---------------------------------------------------------------- commands


def cmd_solve(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    report, err, code, system = _run_solve(cfg)
    doc = {"command": "solve", "config": cfg.echo()}
    if report is not None:
        write_csv(report.solution, out / "waveform.csv")
        doc["report"] = report.to_dict()
        if code == EXIT_OK:
            doc["contraction"] = _contraction(cfg, system, report)
    else:
        doc["report"] = {"converged": False}
    doc["error"] = err
    doc["wall_clock_seconds"] = time.perf_counter() - t0
    dump_json(doc, out / "report.json")
    if err:
        print(f"not converged: {err}", file=sys.stderr)
    else:
        r = report
        print(
            f"converged in {r.outer_iters} outer iterations; amplitude {r.amplitude:.4f}, "
            f"period {r.period_estimate:.4f}"
        )
    return code


def _oracle_features(cfg: RunConfig):
    run = integrate_vdp(cfg.K, cfg.step, cfg.t_end, cfg.initial_state)
    return extract_limit_cycle(run, num_samples=cfg.N)


def cmd_oracle(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.system not in BUILTIN_SYSTEMS:
        raise ConfigError("system", "the oracle integrates the builtin Van der Pol system only")
    feats = _oracle_features(cfg)
    write_csv(feats.waveform, out / "waveform.csv")
    dump_json({"command": "oracle", "config": cfg.echo(), **feats.to_dict()}, out / "features.json")
    print(f"oracle: amplitude {feats.amplitude:.4f}, period {feats.period:.4f}")
    return EXIT_OK


def cmd_compare(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.system not in BUILTIN_SYSTEMS:
        raise ConfigError("system", "compare needs the builtin Van der Pol system")
    report, err, code, _ = _run_solve(cfg)
    feats = _oracle_features(cfg)
    df_amp, df_freq = describing_function_baseline(cfg.K)
    df_period = 2.0 * math.pi / df_freq
    write_csv(feats.waveform, out / "oracle_waveform.csv")
    doc = {
        "command": "compare",
        "config": cfg.echo(),
        "oracle": feats.to_dict(),
        "describing_function": {"amplitude": df_amp, "period": df_period},
        "describing_function_period_error": abs(df_period - feats.period) / feats.period,
        "error": err,
    }
    if report is not None:
        write_csv(report.solution, out / "waveform.csv")
        sol = report.solution
        if sol.grid.num_samples != feats.waveform.grid.num_samples:
            raise ConfigError("N", "solver and oracle sample counts differ")
        rms, shift = compare_waveforms(feats.waveform, sol)
        doc["solver"] = {
            "amplitude": report.amplitude,
            "period": report.period_estimate,
            "converged": report.converged,
            "outer_iters": report.outer_iters,
        }
        doc["solver_period_error"] = abs(report.period_estimate - feats.period) / feats.period
        doc["rms_solver_vs_oracle"] = rms
        doc["phase_shift"] = shift
    else:
        rms = math.inf
        doc["solver"] = None
    dump_json(doc, out / "comparison.json")
    print(
        f"oracle period {feats.period:.4f}; describing function {df_period:.4f}; "
        + (f"solver {report.period_estimate:.4f}, rms {rms:.4f}" if report else f"solver failed: {err}")
    )
    if code != EXIT_OK:
        return code
    return EXIT_OK if rms < COMPARE_RMS_LIMIT else EXIT_NONCONVERGED


def cmd_scalar(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        x0 = float(cfg.init)
    except ValueError:
        raise ConfigError("init", f"scalar needs a numeric initial guess, got {cfg.init!r}") from None
    prob = double_well()
    doc = {"command": "scalar", "config": cfg.echo()}
    code = EXIT_OK
    traj: list[float] = [x0]
    try:
        x, iters, traj = scalar_mixed_solve(prob.A, prob.B, x0, cfg.tol, cfg.max_outer)
        doc.update(x_star=x, iters=iters, converged=True, error=None)
        print(f"x* = {x:.6f} after {iters} iterations")
    except (BasinEscapeError, ArithmeticError) as exc:
        doc.update(x_star=None, iters=None, converged=False, error=str(exc))
        print(f"not converged: {exc}", file=sys.stderr)
        code = EXIT_NONCONVERGED
    with open(out / "trajectory.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "x"])
        for i, v in enumerate(traj):
            w.writerow([i, format(v, ".12g")])
    dump_json(doc, out / "report.json")
    return code


COMMANDS = {"solve": cmd_solve, "oracle": cmd_oracle, "compare": cmd_compare, "scalar": cmd_scalar}


def main(argv=None) -> int:
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
        return COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"configuration error in {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SystemFileError, MonotonicityError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResonanceError as exc:
        print(f"resonance at {exc.frequency:.6g} rad/s: {exc}", file=sys.stderr)
        return EXIT_RESONANCE
    except DivergenceError as exc:
        print(f"oracle diverged: {exc}", file=sys.stderr)
        return EXIT_RESONANCE
    except TransientError as exc:
        print(f"oracle: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except Exception as exc:  # noqa: BLE001 - never surface a traceback
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
