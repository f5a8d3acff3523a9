"""Monte-Carlo study of the quantile estimators on simulated SMA series."""

from __future__ import annotations

import math
import sys
import time
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .delta import DEFAULT_C, PARAM_NAMES, asymptotic_covariance
from .mcculloch import ALPHA_HIGH, ALPHA_LOW, BETA_CLAMP, default_tables, estimate_params
from .quantile_cov import DEFAULT_LEVELS, QUANTILE_METHODS, empirical_quantiles
from .sma import SmaModel, aggregate_params, simulate
from .stable import StableParams, make_rng

__all__ = [
    "SimulationConfig",
    "ParamSummary",
    "SimulationReport",
    "run_estimates",
    "run_simulation",
    "TABLE_ROWS",
    "TABLE_THETAS",
]

TABLE_ROWS = tuple((a, b) for a in (1.2, 1.5, 1.8) for b in (0.0, 0.2, 0.5))
TABLE_THETAS = (0.0, 0.2, 0.4)
FLAG_NAMES = (ALPHA_HIGH, ALPHA_LOW, BETA_CLAMP)
# substream for the series behind empirical-mode asymptotic variances;
# realisation indices stay below it
ASYMPTOTIC_STREAM = 2**32 - 1


@dataclass(frozen=True)
class SimulationConfig:
    model: SmaModel
    realisations: int = 2000
    length: int = 720
    seed: int = 0
    levels: tuple[float, ...] = DEFAULT_LEVELS
    C: float = DEFAULT_C
    empirical_length: Optional[int] = None
    quantile_method: str = "hazen"

    def __post_init__(self):
        if not 1 <= self.realisations < ASYMPTOTIC_STREAM:
            raise ValueError("realisations must be at least 1")
        if self.length <= 2 * self.model.q:
            raise ValueError(f"length must exceed 2q = {2 * self.model.q}")
        if tuple(self.levels) != DEFAULT_LEVELS:
            raise ValueError(f"the estimator uses the levels {DEFAULT_LEVELS}")
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.quantile_method not in QUANTILE_METHODS:
            raise ValueError(f"quantile_method must be one of {QUANTILE_METHODS}")

    def echo(self) -> dict:
        inn = self.model.innovation
        return {
            "alpha": inn.alpha,
            "beta0": inn.beta,
            "gamma0": inn.gamma,
            "delta0": inn.delta,
            "theta": list(self.model.theta),
            "realisations": self.realisations,
            "length": self.length,
            "seed": self.seed,
            "levels": list(self.levels),
            "C": self.C,
            "empirical_length": self.empirical_length,
            "quantile_method": self.quantile_method,
        }


@dataclass(frozen=True)
class ParamSummary:
    mean: float
    sd: Optional[float]
    n_var: Optional[float]
    asym_var: float


@dataclass(frozen=True)
class SimulationReport:
    config: SimulationConfig
    true_params: StableParams
    summary: dict
    clamp_rates: dict
    estimates: np.ndarray = field(repr=False)
    wall_time: float = math.nan

    def to_dict(self, include_estimates: bool = False, include_timing: bool = False) -> dict:
        out = {
            "config": self.config.echo(),
            "true_params": dict(zip(PARAM_NAMES, self.true_params.as_tuple())),
            "parameters": {k: asdict(v) for k, v in self.summary.items()},
            "clamp_rates": dict(self.clamp_rates),
        }
        if include_estimates:
            out["estimates"] = [dict(zip(PARAM_NAMES, row)) for row in self.estimates.tolist()]
        if include_timing:
            out["wall_time"] = self.wall_time
        return out


@lru_cache(maxsize=64)
def analytic_covariance(model: SmaModel, C: float = DEFAULT_C):
    """Memoised analytic asymptotic covariance; models and C are hashable."""
    return asymptotic_covariance(model, C)


def _estimate_range(model, length, seed, stream, quantile_method, start, stop):
    tables = default_tables()
    est = np.empty((stop - start, 4))
    flags = np.zeros((stop - start, len(FLAG_NAMES)), dtype=bool)
    for row, idx in enumerate(range(start, stop)):
        series = simulate(model, length, make_rng(seed, *stream, idx))
        res = estimate_params(empirical_quantiles(series, method=quantile_method), tables)
        est[row] = res.params.as_tuple()
        flags[row] = [name in res.flags for name in FLAG_NAMES]
    return est, flags


def run_estimates(
    model: SmaModel,
    realisations: int,
    length: int,
    seed: int = 0,
    jobs: int = 1,
    progress: Optional[Callable[[int, int], None]] = None,
    stream: tuple = (),
    quantile_method: str = "hazen",
):
    """Estimates for realisations 0..R-1; realisation i uses stream (seed, *stream, i).

    Returns (R x 4 estimates, R x 3 clamp indicators).  Results do not depend
    on ``jobs``.
    """
    args = (model, length, seed, tuple(stream), quantile_method)
    chunk = max(1, min(250, math.ceil(realisations / max(1, 4 * jobs))))
    bounds = [(s, min(s + chunk, realisations)) for s in range(0, realisations, chunk)]
    parts = [None] * len(bounds)
    done = 0
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_estimate_range, *args, s, e) for s, e in bounds]
            for i, fut in enumerate(futures):
                parts[i] = fut.result()
                done += bounds[i][1] - bounds[i][0]
                if progress:
                    progress(done, realisations)
    else:
        for i, (s, e) in enumerate(bounds):
            parts[i] = _estimate_range(*args, s, e)
            done += e - s
            if progress:
                progress(done, realisations)
    est = np.concatenate([p[0] for p in parts])
    flags = np.concatenate([p[1] for p in parts])
    return est, flags


def summarise(estimates: np.ndarray, length: int, asym_var: Sequence[float]) -> dict:
    out = {}
    r = estimates.shape[0]
    for k, name in enumerate(PARAM_NAMES):
        col = estimates[:, k]
        if r > 1:
            var = float(np.var(col, ddof=1))
            sd, n_var = math.sqrt(var), length * var
        else:
            sd = n_var = None
        out[name] = ParamSummary(float(np.mean(col)), sd, n_var, float(asym_var[k]))
    return out


def run_simulation(
    config: SimulationConfig,
    jobs: int = 1,
    progress: Optional[Callable[[int, int], None]] = None,
    asymptotic=None,
    stream: tuple = (),
) -> SimulationReport:
    """Simulate, estimate, aggregate, and attach the asymptotic variances."""
    started = time.perf_counter()
    model = config.model
    if asymptotic is None:
        if config.empirical_length:
            series = simulate(model, config.empirical_length, make_rng(config.seed, ASYMPTOTIC_STREAM))
            asymptotic = asymptotic_covariance(model, config.C, mode="empirical", series=series)
        else:
            asymptotic = analytic_covariance(model, config.C)
    est, flags = run_estimates(
        model, config.realisations, config.length, config.seed, jobs, progress, stream, config.quantile_method
    )
    summary = summarise(est, config.length, asymptotic.params.diagonal())
    rates = {name: float(flags[:, k].mean()) for k, name in enumerate(FLAG_NAMES)}
    return SimulationReport(
        config,
        aggregate_params(model),
        summary,
        rates,
        est,
        time.perf_counter() - started,
    )


def stderr_progress(label: str):
    state = {"last": -1}

    def report(done, total):
        pct = (100 * done) // total
        if pct // 10 != state["last"] // 10 or done == total:
            state["last"] = pct
            print(f"{label}: {done}/{total}", file=sys.stderr, flush=True)

    return report
