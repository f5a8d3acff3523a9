"""Empirical quantiles of a dependent sample and their asymptotic covariance.

For a stationary S-mixing scalar process observed n times, sqrt(n)(xi_hat - xi)
is asymptotically normal with covariance

    sigma_ij = sum_h (G_h(xi_i, xi_j) - p_i p_j) / (f(xi_i) f(xi_j)),

G_h(a, b) = P(X_t <= a, X_{t+h} <= b).  For an SMA(q) process the sum stops
at |h| = q.  G_0 is min(p_i, p_j); G_1 of an SMA(1) is a one-dimensional
integral over the shared innovation; higher lags are estimated from data.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from .sma import SmaModel, aggregate_params
from .stable import QuadratureError, StableParams, stable_cdf, stable_pdf, stable_quantile, stable_sf

__all__ = [
    "DEFAULT_LEVELS",
    "QUANTILE_METHODS",
    "QuantileSet",
    "CovMatrix",
    "NotPositiveSemidefinite",
    "empirical_quantiles",
    "population_quantiles",
    "g0",
    "g1_analytic",
    "g1_matrix",
    "g_h_empirical",
    "sigma_iid",
    "sigma_quantiles",
]

DEFAULT_LEVELS = (0.05, 0.25, 0.50, 0.75, 0.95)

G1_EPSABS = 1e-8
PSD_TOL = 1e-8


@dataclass(frozen=True)
class QuantileSet:
    """Probability levels paired with quantile values."""

    levels: tuple[float, ...]
    values: tuple[float, ...]
    kind: str = "population"

    def __post_init__(self):
        levels = tuple(float(p) for p in self.levels)
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "values", values)
        if len(levels) != len(values) or not levels:
            raise ValueError("levels and values must be non-empty and of equal length")
        if any(not (0.0 < p < 1.0) for p in levels):
            raise ValueError("levels must lie in (0, 1)")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("levels must be strictly increasing")
        if any(b < a for a, b in zip(values, values[1:])):
            raise ValueError("quantile values must be nondecreasing")
        if self.kind not in ("population", "empirical"):
            raise ValueError(f"unknown kind {self.kind!r}")

    def __getitem__(self, p: float) -> float:
        for level, value in zip(self.levels, self.values):
            if abs(level - p) < 1e-12:
                return value
        raise KeyError(p)

    def as_array(self) -> np.ndarray:
        return np.array(self.values)

    def replace_values(self, values) -> "QuantileSet":
        return QuantileSet(self.levels, tuple(values), self.kind)


class NotPositiveSemidefinite(ValueError):
    pass


@dataclass(frozen=True)
class CovMatrix:
    """Symmetric positive-semidefinite covariance matrix."""

    matrix: np.ndarray
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"covariance must be square, got shape {m.shape}")
        if self.labels and len(self.labels) != m.shape[0]:
            raise ValueError("labels do not match the matrix dimension")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix).copy()

    @classmethod
    def assemble(cls, a, labels=(), tol: float = PSD_TOL) -> "CovMatrix":
        """Symmetrise ``a`` and clip eigenvalues in (-tol*scale, 0) to zero.

        ``scale`` is max(1, largest diagonal entry); anything more negative
        raises NotPositiveSemidefinite.
        """
        a = np.asarray(a, dtype=float)
        a = 0.5 * (a + a.T)
        if a.size == 0:
            return cls(a, tuple(labels))
        w, v = np.linalg.eigh(a)
        scale = max(1.0, float(np.max(np.abs(np.diag(a)))))
        if w.min() < -tol * scale:
            raise NotPositiveSemidefinite(f"smallest eigenvalue {w.min():.3g} is below -{tol * scale:.3g}")
        if w.min() < 0.0:
            a = (v * np.clip(w, 0.0, None)) @ v.T
            a = 0.5 * (a + a.T)
        return cls(a, tuple(labels))


def _order_index(n: int, p: float) -> int:
    """Smallest k with k/n >= p (1-based order statistic)."""
    k = max(1, math.ceil(n * p))
    while k > 1 and (k - 1) / n >= p:
        k -= 1
    while k / n < p:
        k += 1
    return min(k, n)


QUANTILE_METHODS = ("inverse_cdf", "hazen")


def empirical_quantiles(series, levels: Sequence[float] = DEFAULT_LEVELS, method: str = "inverse_cdf") -> QuantileSet:
    """Sample quantiles of ``series`` at ``levels``.

    'inverse_cdf' is inf{x : F_n(x) >= p}, the ceil(n p)-th order statistic.
    'hazen' interpolates linearly between order statistics placed at
    (k - 1/2)/n; it treats the two tails symmetrically, so for a symmetric
    law xi_p + xi_(1-p) has no order-statistic offset.  Both have the same
    asymptotic distribution.
    """
    x = np.asarray(series, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("series is empty")
    if method == "inverse_cdf":
        xs = np.sort(x)
        n = xs.size
        values = [xs[_order_index(n, p) - 1] for p in levels]
    elif method == "hazen":
        values = np.quantile(x, np.asarray(levels, dtype=float), method="hazen")
    else:
        raise ValueError(f"unknown quantile method {method!r}; expected one of {QUANTILE_METHODS}")
    return QuantileSet(tuple(levels), tuple(values), "empirical")


def population_quantiles(params: StableParams, levels: Sequence[float] = DEFAULT_LEVELS) -> QuantileSet:
    values = stable_quantile(params, np.asarray(levels, dtype=float))
    return QuantileSet(tuple(levels), tuple(np.atleast_1d(values)), "population")


def g0(p_i: float, p_j: float) -> float:
    return min(p_i, p_j)


def _g1_integrand_factory(innovation: StableParams, theta1: float, xi_i, xi_j):
    xi_i = np.atleast_1d(np.asarray(xi_i, dtype=float))
    xi_j = np.atleast_1d(np.asarray(xi_j, dtype=float))
    first_tail = stable_cdf if theta1 > 0 else stable_sf

    def integrand(u):
        dens = stable_pdf(innovation, u)
        if dens == 0.0:
            return np.zeros((xi_i.size, xi_j.size))
        a = first_tail(innovation, (xi_i - u) / theta1)
        b = stable_cdf(innovation, xi_j - theta1 * u)
        return dens * np.outer(a, b)

    return integrand


def _g1_breakpoints(innovation: StableParams, theta1: float, xi_i, xi_j):
    centre = innovation.delta
    spread = innovation.gamma
    pts = {centre - 5 * spread, centre, centre + 5 * spread}
    pts.update(float(x) for x in np.atleast_1d(xi_i))
    for x in np.atleast_1d(xi_j):
        pts.add(float((x - centre) / theta1))
    return sorted(pts)


def g1_matrix(innovation: StableParams, theta1: float, xi_i, xi_j=None) -> np.ndarray:
    """G_1(xi_i[a], xi_j[b]) for an SMA(1) process, as a matrix over (a, b).

    Integrates F((xi_i - u)/theta1) F(xi_j - theta1 u) f(u) du over the
    innovation density f; for theta1 < 0 the first factor is the survival
    function.  All pairs share one adaptive vector-valued quadrature.
    """
    if theta1 == 0.0:
        raise ValueError("theta1 = 0 makes X_t and X_t+1 independent; use p_i * p_j")
    if xi_j is None:
        xi_j = xi_i
    integrand = _g1_integrand_factory(innovation, theta1, xi_i, xi_j)
    pts = _g1_breakpoints(innovation, theta1, xi_i, xi_j)
    total = 0.0
    err = 0.0
    edges = [-np.inf] + pts + [np.inf]
    for lo, hi in zip(edges[:-1], edges[1:]):
        if not hi > lo:
            continue
        res, e = integrate.quad_vec(integrand, lo, hi, epsabs=G1_EPSABS / len(edges), epsrel=1e-10, limit=2000)
        total = total + res
        err += e
    if err > 10 * G1_EPSABS:
        raise QuadratureError("G_1 integral failed to converge", err)
    return np.clip(np.atleast_2d(total), 0.0, 1.0)


def g1_analytic(innovation: StableParams, theta1: float, xi_i: float, xi_j: float) -> float:
    """P(X_t <= xi_i, X_t+1 <= xi_j) for X_t = eps_t + theta1 eps_t-1."""
    return float(g1_matrix(innovation, theta1, [xi_i], [xi_j])[0, 0])


def g_h_empirical(series, xi_i: float, xi_j: float, h: int) -> float:
    """(n - |h|)^-1 sum_t I{x_t <= xi_i} I{x_t+h <= xi_j}; negative h by reflection."""
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    h = int(h)
    if abs(h) >= n:
        raise ValueError(f"|h| = {abs(h)} must be smaller than the series length {n}")
    if h < 0:
        return g_h_empirical(x, xi_j, xi_i, -h)
    below_i = x[: n - h] <= xi_i
    below_j = x[h:] <= xi_j
    return float(np.mean(below_i & below_j))


def sigma_iid(levels: Sequence[float], density: Sequence[float]) -> np.ndarray:
    """Covariance of sqrt(n)(xi_hat - xi) for an iid sample."""
    p = np.asarray(levels, dtype=float)
    f = np.asarray(density, dtype=float)
    lo = np.minimum.outer(p, p)
    hi = np.maximum.outer(p, p)
    return lo * (1.0 - hi) / np.outer(f, f)


def _lag_sum_analytic(model: SmaModel, levels, xi):
    p = np.asarray(levels, dtype=float)
    pp = np.outer(p, p)
    total = np.minimum.outer(p, p) - pp
    if model.q == 0:
        return total
    if model.q > 1:
        raise ValueError(
            f"analytic G_h is only available for q <= 1 (got q={model.q}); "
            "use mode='empirical' with a simulated series"
        )
    theta1 = model.theta[1]
    if theta1 == 0.0:
        return total
    g1 = g1_matrix(model.innovation, theta1, xi)
    # G_-1(xi_i, xi_j) = G_1(xi_j, xi_i)
    return total + (g1 - pp) + (g1.T - pp)


def _lag_sum_empirical(model: SmaModel, levels, xi, series):
    p = np.asarray(levels, dtype=float)
    k = p.size
    pp = np.outer(p, p)
    total = np.minimum.outer(p, p) - pp
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    below = x[None, :] <= np.asarray(xi)[:, None]
    for h in range(1, model.q + 1):
        if h >= n:
            raise ValueError("series too short for the requested lag window")
        gh = (below[:, : n - h].astype(float) @ below[:, h:].T.astype(float)) / (n - h)
        total += (gh - pp) + (gh.T - pp)
    assert total.shape == (k, k)
    return total


def sigma_quantiles(
    model: SmaModel,
    levels: Sequence[float] = DEFAULT_LEVELS,
    mode: str = "analytic",
    series=None,
) -> CovMatrix:
    """Asymptotic covariance of sqrt(n)(xi_hat - xi) for the SMA(q) model.

    ``mode='analytic'`` evaluates G_0 and (for q = 1) G_1 exactly;
    ``mode='empirical'`` estimates G_h, 1 <= |h| <= q, from ``series``.
    Quantiles and densities always come from the aggregate marginal law.
    """
    marginal = aggregate_params(model)
    xi = np.atleast_1d(stable_quantile(marginal, np.asarray(levels, dtype=float)))
    dens = np.atleast_1d(stable_pdf(marginal, xi))
    if mode == "analytic":
        lag_sum = _lag_sum_analytic(model, levels, xi)
    elif mode == "empirical":
        if series is None:
            raise ValueError("empirical mode needs a series")
        lag_sum = _lag_sum_empirical(model, levels, xi, series)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    sigma = lag_sum / np.outer(dens, dens)
    labels = tuple(f"xi_{p:g}" for p in levels)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return CovMatrix.assemble(sigma, labels)
