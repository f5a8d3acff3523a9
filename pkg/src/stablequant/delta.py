"""Delta-method covariance of the quantile estimators.

The Jacobian of (alpha, beta, gamma, delta) with respect to the five
quantiles is taken by central differences with a common step
IQR / C, re-running the whole estimation for every perturbed set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .mcculloch import ALPHA_HIGH, LookupTables, default_tables, estimate_params
from .quantile_cov import DEFAULT_LEVELS, CovMatrix, QuantileSet, population_quantiles, sigma_quantiles
from .sma import SmaModel, aggregate_params

__all__ = [
    "PARAM_NAMES",
    "DEFAULT_C",
    "Jacobian",
    "numeric_jacobian",
    "param_covariance",
    "AsymptoticResult",
    "asymptotic_covariance",
]

PARAM_NAMES = ("alpha", "beta", "gamma", "delta")
DEFAULT_C = 400.0

ONE_SIDED = "one_sided_difference"


@dataclass(frozen=True)
class Jacobian:
    """d(alpha, beta, gamma, delta) / d(xi_p), shape 4 x k."""

    entries: np.ndarray
    perturbation: float
    C: float
    flags: frozenset = frozenset()

    def __post_init__(self):
        m = np.array(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != 4:
            raise ValueError(f"Jacobian must have 4 rows, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("Jacobian has non-finite entries")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)


def _params(q, tables):
    res = estimate_params(q, tables, method="spline")
    return np.array(res.params.as_tuple()), res.flags


def numeric_jacobian(
    q: QuantileSet,
    C: float = DEFAULT_C,
    tables: Optional[LookupTables] = None,
) -> Jacobian:
    """Central-difference Jacobian of the estimates at the quantile set ``q``.

    When one side of a perturbation pushes alpha onto the alpha = 2 clamp,
    the difference is taken one-sided from the other side.
    """
    if not C > 0:
        raise ValueError("C must be positive")
    tables = tables or default_tables()
    values = q.as_array()
    step = (q[0.75] - q[0.25]) / C
    if not step > 0:
        raise ValueError("interquartile range must be positive")
    centre, centre_flags = _params(q, tables)
    flags = set(centre_flags)
    cols = []
    for k in range(values.size):
        sets = []
        for sign in (1.0, -1.0):
            v = values.copy()
            v[k] += sign * step
            if np.any(np.diff(v) < 0):
                raise ValueError(
                    f"perturbing level {q.levels[k]} by {sign * step:g} breaks quantile ordering; spacing is degenerate"
                )
            sets.append(q.replace_values(v))
        up, up_flags = _params(sets[0], tables)
        down, down_flags = _params(sets[1], tables)
        up_clamped = ALPHA_HIGH in up_flags and ALPHA_HIGH not in centre_flags
        down_clamped = ALPHA_HIGH in down_flags and ALPHA_HIGH not in centre_flags
        if up_clamped and not down_clamped:
            cols.append((centre - down) / step)
            flags.add(ONE_SIDED)
        elif down_clamped and not up_clamped:
            cols.append((up - centre) / step)
            flags.add(ONE_SIDED)
        else:
            cols.append((up - down) / (2.0 * step))
    return Jacobian(np.column_stack(cols), step, float(C), frozenset(flags))


def param_covariance(J: Jacobian | np.ndarray, sigma_q: CovMatrix | np.ndarray) -> CovMatrix:
    """J Sigma J^T for the four parameters."""
    j = J.entries if isinstance(J, Jacobian) else np.asarray(J, dtype=float)
    s = sigma_q.matrix if isinstance(sigma_q, CovMatrix) else np.asarray(sigma_q, dtype=float)
    if j.ndim != 2 or s.ndim != 2 or j.shape[1] != s.shape[0] or s.shape[0] != s.shape[1]:
        raise ValueError(f"shape mismatch: Jacobian {j.shape}, covariance {s.shape}")
    names = PARAM_NAMES if j.shape[0] == 4 else ()
    return CovMatrix.assemble(j @ s @ j.T, names)


@dataclass(frozen=True)
class AsymptoticResult:
    params: CovMatrix
    quantiles: CovMatrix
    jacobian: Jacobian
    population: QuantileSet

    def variances(self) -> dict:
        return dict(zip(PARAM_NAMES, self.params.diagonal()))


def asymptotic_covariance(
    model: SmaModel,
    C: float = DEFAULT_C,
    levels: Sequence[float] = DEFAULT_LEVELS,
    mode: str = "analytic",
    series=None,
    tables: Optional[LookupTables] = None,
) -> AsymptoticResult:
    """n times the asymptotic covariance of the estimates for an SMA model."""
    if tuple(levels) != DEFAULT_LEVELS:
        raise ValueError(f"the estimator uses the levels {DEFAULT_LEVELS}")
    pop = population_quantiles(aggregate_params(model), levels)
    sigma = sigma_quantiles(model, levels, mode=mode, series=series)
    jac = numeric_jacobian(pop, C, tables)
    return AsymptoticResult(param_covariance(jac, sigma), sigma, jac, pop)
