"""Command-line interface: simulation studies, asymptotic variances, tables."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .delta import DEFAULT_C, PARAM_NAMES, numeric_jacobian, param_covariance
from .mcculloch import (
    CACHE_ENV,
    DEFAULT_ALPHA_GRID,
    DEFAULT_BETA_GRID,
    build_lookup,
    cache_path,
    default_tables,
    save_tables,
)
from .quantile_cov import DEFAULT_LEVELS, QUANTILE_METHODS, population_quantiles, sigma_quantiles
from .simulation import TABLE_ROWS, TABLE_THETAS, SimulationConfig, run_simulation, stderr_progress
from .sma import SmaModel, aggregate_params, simulate
from .stable import StableParams, make_rng

TABLE_FILES = (
    ("table1_alpha.csv", "alpha", TABLE_THETAS),
    ("table2_beta.csv", "beta", TABLE_THETAS),
    ("table3_gamma.csv", "gamma", (0.0, 0.4)),
    ("table4_delta.csv", "delta", (0.0, 0.4)),
)
CELL_FIELDS = ("mean", "sd", "n_var", "asym_var")
DEFAULT_SWEEP = (50, 100, 200, 400, 800, 1000)


class CliError(Exception):
    pass


def fmt(x) -> str:
    """Six significant digits; empty for missing values."""
    if x is None:
        return ""
    return f"{float(x):.6g}"


def _round6(obj):
    if isinstance(obj, float):
        return float(f"{obj:.6g}")
    if isinstance(obj, dict):
        return {k: _round6(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round6(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _round6(obj.tolist())
    return obj


def _float_list(text: str, name: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise CliError(f"--{name} expects comma-separated numbers, got {text!r}") from None


def _grid(text: str, name: str) -> tuple[float, ...]:
    """start:stop:step, inclusive of stop, values exact to the decimal input."""
    try:
        start, stop, step = (Decimal(t) for t in text.split(":"))
    except (ValueError, InvalidOperation):
        raise CliError(f"--{name} expects start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start:
        raise CliError(f"--{name}: need step > 0 and stop >= start")
    count = int((stop - start) / step) + 1
    return tuple(float(start + k * step) for k in range(count))


def _model(args) -> SmaModel:
    theta = _float_list(args.theta, "theta")
    while theta and theta[-1] == 0.0:
        theta.pop()
    try:
        innovation = StableParams(args.alpha, args.beta, args.gamma0, args.delta0)
        return SmaModel((1.0, *theta), innovation)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _levels(args) -> tuple[float, ...]:
    levels = tuple(_float_list(args.levels, "levels"))
    if not levels:
        raise CliError("--levels is empty")
    return levels


def _open_output(path: Optional[str]):
    if path in (None, "-"):
        return sys.stdout, False
    p = Path(path)
    if not p.parent.is_dir():
        raise CliError(f"output directory {p.parent} does not exist")
    return open(p, "w", newline=""), True


def _emit(text: str, path: Optional[str]):
    handle, close = _open_output(path)
    try:
        handle.write(text)
    finally:
        if close:
            handle.close()


def _progress(args, label):
    return None if args.quiet else stderr_progress(label)


def _log(args, msg):
    if not args.quiet:
        print(msg, file=sys.stderr, flush=True)


# ---------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    model = _model(args)
    try:
        config = SimulationConfig(
            model,
            args.realisations,
            args.length,
            args.seed,
            _levels(args),
            args.c_divisor,
            args.empirical,
            args.quantile_method,
        )
        aggregate_params(model)
    except (ValueError, NotImplementedError) as exc:
        raise CliError(str(exc)) from None
    report = run_simulation(config, jobs=args.jobs, progress=_progress(args, "realisations"))
    _log(args, f"wall time {report.wall_time:.1f} s")
    if args.format == "json":
        body = report.to_dict(include_estimates=args.dump_estimates, include_timing=args.timing)
        _emit(json.dumps(_round6(body), indent=2) + "\n", args.output)
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["parameter", "true", *CELL_FIELDS])
        for name, true in zip(PARAM_NAMES, report.true_params.as_tuple()):
            s = report.summary[name]
            writer.writerow([name, fmt(true), fmt(s.mean), fmt(s.sd), fmt(s.n_var), fmt(s.asym_var)])
        _emit(buf.getvalue(), args.output)
    return 0


# ---------------------------------------------------------------- asymvar


def _sweep(args) -> tuple[float, ...]:
    """C values to evaluate; always includes --c-divisor."""
    if args.sweep_c is None:
        return (args.c_divisor,)
    values = tuple(_float_list(args.sweep_c, "sweep-c")) if args.sweep_c else DEFAULT_SWEEP
    if not values or min(values) <= 0:
        raise CliError("--sweep-c values must be positive")
    return tuple(sorted(set(values) | {args.c_divisor}))


def cmd_asymvar(args) -> int:
    model = _model(args)
    levels = _levels(args)
    mode = "empirical" if args.empirical else "analytic"
    series = None
    if mode == "analytic" and model.q > 1:
        raise CliError(f"q = {model.q}: analytic G_h needs q <= 1; pass --empirical N to estimate from a simulated series")
    if mode == "empirical":
        series = simulate(model, args.empirical, make_rng(args.seed))
    try:
        sigma = sigma_quantiles(model, levels, mode=mode, series=series)
    except (ValueError, NotImplementedError) as exc:
        raise CliError(str(exc)) from None
    marginal = aggregate_params(model)
    out = {
        "model": {"theta": list(model.theta), "innovation": list(model.innovation.as_tuple())},
        "marginal": dict(zip(PARAM_NAMES, marginal.as_tuple())),
        "levels": list(levels),
        "mode": mode,
        "quantile_cov": sigma.matrix.tolist(),
    }
    rows = []
    if tuple(levels) == DEFAULT_LEVELS:
        pop = population_quantiles(marginal, levels)
        sweep = []
        for C in _sweep(args):
            jac = numeric_jacobian(pop, C)
            cov = param_covariance(jac, sigma)
            sweep.append(
                {
                    "C": C,
                    "param_cov": cov.matrix.tolist(),
                    "variances": dict(zip(PARAM_NAMES, cov.diagonal().tolist())),
                    "jacobian": jac.entries.tolist(),
                    "flags": sorted(jac.flags),
                }
            )
            for k, name in enumerate(PARAM_NAMES):
                rows.append([C, name, cov.matrix[k, k], *jac.entries[k]])
        main = next(s for s in sweep if s["C"] == args.c_divisor)
        out.update({"C": main["C"], "param_cov": main["param_cov"], "variances": main["variances"]})
        if args.sweep_c is not None:
            out["sweep"] = sweep
    else:
        _log(args, "non-default levels: parameter covariance needs the five estimator levels; reporting Sigma only")
    if args.format == "json":
        _emit(json.dumps(_round6(out), indent=2) + "\n", args.output)
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if rows:
            writer.writerow(["C", "parameter", "n_var", *(f"d_xi_{p:g}" for p in levels)])
            for r in rows:
                writer.writerow([fmt(r[0]), r[1], *(fmt(v) for v in r[2:])])
        else:
            writer.writerow(["level", *(f"{p:g}" for p in levels)])
            for p, row in zip(levels, sigma.matrix):
                writer.writerow([f"{p:g}", *(fmt(v) for v in row)])
        _emit(buf.getvalue(), args.output)
    return 0


# ---------------------------------------------------------------- tables


def run_tables(
    realisations: int,
    length: int,
    seed: int,
    C: float = DEFAULT_C,
    quantile_method: str = "hazen",
    jobs: int = 1,
    log=None,
) -> dict:
    """Simulation summaries for every (alpha, beta0, theta1) cell.

    Cell (row r, column c) draws realisation i from stream (seed, 3r + c, i).
    """
    cells = {}
    for r, (alpha, beta) in enumerate(TABLE_ROWS):
        for c, theta1 in enumerate(TABLE_THETAS):
            theta = (1.0, theta1) if theta1 else (1.0,)
            model = SmaModel(theta, StableParams(alpha, beta, 2.0, 1.0))
            config = SimulationConfig(model, realisations, length, seed, DEFAULT_LEVELS, C, None, quantile_method)
            if log:
                log(f"cell alpha={alpha:g} beta0={beta:g} theta1={theta1:g}")
            report = run_simulation(config, jobs=jobs, stream=(3 * r + c,))
            cells[(alpha, beta, theta1)] = report
    return cells


def write_tables(cells: dict, out_dir: Path) -> list[Path]:
    written = []
    for filename, name, thetas in TABLE_FILES:
        k = PARAM_NAMES.index(name)
        header = ["alpha", "beta0"]
        for th in thetas:
            fields = (["true"] if name in ("gamma", "delta") else []) + list(CELL_FIELDS)
            header += [f"theta1={th:g}:{f}" for f in fields]
        path = out_dir / filename
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for alpha, beta in TABLE_ROWS:
                row = [fmt(alpha), fmt(beta)]
                for th in thetas:
                    rep = cells[(alpha, beta, th)]
                    s = rep.summary[name]
                    if name in ("gamma", "delta"):
                        row.append(fmt(rep.true_params.as_tuple()[k]))
                    row += [fmt(s.mean), fmt(s.sd), fmt(s.n_var), fmt(s.asym_var)]
                writer.writerow(row)
        written.append(path)
    return written


def cmd_tables(args) -> int:
    out_dir = Path(args.output)
    if not out_dir.parent.is_dir():
        raise CliError(f"parent of {out_dir} does not exist")
    out_dir.mkdir(exist_ok=True)
    cells = run_tables(
        args.realisations,
        args.length,
        args.seed,
        args.c_divisor,
        args.quantile_method,
        args.jobs,
        None if args.quiet else lambda m: _log(args, m),
    )
    for path in write_tables(cells, out_dir):
        print(path)
    return 0


# ---------------------------------------------------------------- build-tables


def cmd_build_tables(args) -> int:
    alpha_grid = _grid(args.alpha_grid, "alpha-grid") if args.alpha_grid else DEFAULT_ALPHA_GRID
    beta_grid = _grid(args.beta_grid, "beta-grid") if args.beta_grid else DEFAULT_BETA_GRID
    target = Path(args.output) if args.output else cache_path(alpha_grid, beta_grid)
    if args.output is None:
        target.parent.mkdir(parents=True, exist_ok=True)
    if not target.parent.is_dir():
        raise CliError(f"output directory {target.parent} does not exist")
    try:
        tables = build_lookup(alpha_grid, beta_grid, n_jobs=args.jobs, progress=_progress(args, "alpha rows"))
    except ValueError as exc:
        raise CliError(str(exc)) from None
    save_tables(tables, target)
    default_tables.cache_clear()
    print(target)
    return 0


# ---------------------------------------------------------------- parser


def _add_model_flags(p):
    p.add_argument("--alpha", type=float, required=True, help="stability index of the innovations")
    p.add_argument("--beta", type=float, default=0.0, help="skewness of the innovations")
    p.add_argument("--theta", default="", help="MA coefficients theta_1,...,theta_q (theta_0 = 1)")
    p.add_argument("--gamma0", type=float, default=2.0, help="innovation scale")
    p.add_argument("--delta0", type=float, default=1.0, help="innovation location")


def _add_common(p, *, output_help="output file ('-' for stdout)"):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--c-divisor", type=float, default=DEFAULT_C, help="perturbation step is IQR / C")
    p.add_argument("--levels", default=",".join(f"{p:g}" for p in DEFAULT_LEVELS))
    p.add_argument("--output", default="-", help=output_help)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--quiet", action="store_true", help="no progress on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stablequant",
        description="Quantile estimation of stable laws from moving-average data.",
        epilog=f"Lookup tables are cached in ${CACHE_ENV} (default ~/.cache/stablequant).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Monte-Carlo study for one model")
    _add_model_flags(p)
    _add_common(p)
    p.add_argument("--realisations", type=int, default=2000)
    p.add_argument("--length", type=int, default=720)
    p.add_argument("--empirical", type=int, metavar="N", help="asymptotic variances from a simulated series of length N")
    p.add_argument("--quantile-method", choices=QUANTILE_METHODS, default="hazen")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--dump-estimates", action="store_true", help="include per-realisation estimates (json)")
    p.add_argument("--timing", action="store_true", help="include wall time in the report")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("asymvar", help="asymptotic covariance of the estimates")
    _add_model_flags(p)
    _add_common(p)
    p.add_argument("--empirical", type=int, metavar="N", help="estimate G_h from a simulated series of length N")
    p.add_argument(
        "--sweep-c",
        nargs="?",
        const="",
        default=None,
        help="comma-separated C values (default sweep 50..1000) for Jacobian stability",
    )
    p.set_defaults(func=cmd_asymvar)

    p = sub.add_parser("tables", help="regenerate the four simulation tables as CSV")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--realisations", type=int, default=2000)
    p.add_argument("--length", type=int, default=720)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--c-divisor", type=float, default=DEFAULT_C)
    p.add_argument("--quantile-method", choices=QUANTILE_METHODS, default="hazen")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_tables)

    p = sub.add_parser("build-tables", help="build the (alpha, beta) lookup table")
    p.add_argument("--output", help="table file (default: cache location)")
    p.add_argument("--alpha-grid", help="start:stop:step, default 0.6:2.0:0.01")
    p.add_argument("--beta-grid", help="start:stop:step, default 0:1:0.02")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_build_tables)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"stablequant {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
