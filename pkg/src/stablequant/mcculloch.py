"""Quantile-based estimation of (alpha, beta, gamma, delta).

The statistics

    v_alpha = (xi_.95 - xi_.05) / (xi_.75 - xi_.25)
    v_beta  = (xi_.95 + xi_.05 - 2 xi_.50) / (xi_.95 - xi_.05)

depend on (alpha, beta) only.  A lookup table of phi1(alpha, beta) and
phi2(alpha, beta) over a grid is inverted numerically; gamma and delta then
follow from the location-scale property of S0 quantiles.
"""

from __future__ import annotations

import hashlib
import math
import os
import struct
import sys
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import optimize
from scipy.interpolate import RectBivariateSpline

from .quantile_cov import DEFAULT_LEVELS, CovMatrix, QuantileSet
from .stable import StableParams, stable_quantile

__all__ = [
    "CACHE_ENV",
    "DEFAULT_ALPHA_GRID",
    "DEFAULT_BETA_GRID",
    "LINEAR_BAND",
    "LookupTables",
    "EstimationResult",
    "TableMonotonicityError",
    "DegenerateSampleError",
    "v_stats",
    "build_lookup",
    "save_tables",
    "load_tables",
    "default_tables",
    "invert_v",
    "estimate_params",
]

CACHE_ENV = "STABLEQUANT_CACHE_DIR"
FORMAT_MAGIC = b"STQLUT01"
TABLE_XTOL = 1e-12

DEFAULT_ALPHA_GRID = tuple(np.round(np.arange(60, 201) / 100.0, 2))
DEFAULT_BETA_GRID = tuple(np.round(np.arange(0, 51) / 50.0, 2))

# bilinear interpolation for alpha at or above this value
LINEAR_BAND = 1.95

ALPHA_HIGH = "alpha_clamped_high"
ALPHA_LOW = "alpha_clamped_low"
BETA_CLAMP = "beta_clamped"

_PACKAGED_TABLE = Path(__file__).with_name("data") / "lookup_default.bin"


class TableMonotonicityError(ArithmeticError):
    pass


class DegenerateSampleError(ValueError):
    pass


def v_stats(q: QuantileSet) -> tuple[float, float]:
    try:
        x05, x25, x50, x75, x95 = (q[p] for p in DEFAULT_LEVELS)
    except KeyError as exc:
        raise ValueError(f"quantile set lacks level {exc.args[0]}") from None
    outer = x95 - x05
    inner = x75 - x25
    if not (outer > 0.0 and inner > 0.0):
        raise DegenerateSampleError(
            f"quantile spreads must be positive (xi.95-xi.05={outer:g}, xi.75-xi.25={inner:g})"
        )
    return outer / inner, (x95 + x05 - 2.0 * x50) / outer


# ---------------------------------------------------------------- tables


def _node_quantiles(alpha: float, beta_grid, levels, xtol):
    return np.array([stable_quantile(StableParams(alpha, b), np.asarray(levels), xtol=xtol) for b in beta_grid])


def _phi_from_quantiles(qs):
    x05, x25, x50, x75, x95 = (qs[..., k] for k in range(5))
    return (x95 - x05) / (x75 - x25), (x95 + x05 - 2.0 * x50) / (x95 - x05)


def _check_monotone(alpha_grid, beta_grid, phi1, phi2):
    d_alpha = np.diff(phi1, axis=0)
    bad = np.argwhere(d_alpha >= 0.0)
    if bad.size:
        i, j = bad[0]
        raise TableMonotonicityError(
            f"phi1 not decreasing in alpha between alpha={alpha_grid[i]} and {alpha_grid[i + 1]} at beta={beta_grid[j]}"
        )
    # phi2 vanishes identically at alpha = 2
    interior = np.asarray(alpha_grid) < 2.0
    d_beta = np.diff(phi2[interior], axis=1)
    bad = np.argwhere(d_beta <= 0.0)
    if bad.size:
        i, j = bad[0]
        raise TableMonotonicityError(
            f"phi2 not increasing in beta between beta={beta_grid[j]} and {beta_grid[j + 1]} at alpha={alpha_grid[i]}"
        )


def _validate_grids(alpha_grid, beta_grid, levels):
    a = np.asarray(alpha_grid, dtype=float)
    b = np.asarray(beta_grid, dtype=float)
    if a.size < 4 or b.size < 4:
        raise ValueError("grids need at least 4 nodes for cubic interpolation")
    if np.any(np.diff(a) <= 0) or np.any(np.diff(b) <= 0):
        raise ValueError("grids must be strictly increasing")
    if a[0] <= 0.5 or a[-1] > 2.0:
        raise ValueError("alpha grid must lie in (0.5, 2]")
    if b[0] != 0.0 or b[-1] > 1.0:
        raise ValueError("beta grid must start at 0 and stay within [0, 1]")
    if tuple(levels) != DEFAULT_LEVELS:
        raise ValueError(f"tables are built for levels {DEFAULT_LEVELS}")
    return a, b


@dataclass(frozen=True, eq=False)
class LookupTables:
    """phi1, phi2 and standardised quantiles on an (alpha, beta >= 0) grid.

    ``quantiles[i, j, k]`` is the level-k quantile of S0(alpha_i, beta_j, 1, 0).
    Negative beta is served by reflection: xi_p(-beta) = -xi_{1-p}(beta).
    """

    alpha_grid: np.ndarray
    beta_grid: np.ndarray
    quantiles: np.ndarray
    levels: tuple[float, ...] = DEFAULT_LEVELS
    xtol: float = TABLE_XTOL
    phi1: np.ndarray = field(init=False, repr=False)
    phi2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a, b = _validate_grids(self.alpha_grid, self.beta_grid, self.levels)
        qs = np.asarray(self.quantiles, dtype=float)
        if qs.shape != (a.size, b.size, len(self.levels)):
            raise ValueError(f"quantile array has shape {qs.shape}")
        phi1, phi2 = _phi_from_quantiles(qs)
        for name, arr in (("alpha_grid", a), ("beta_grid", b), ("quantiles", qs), ("phi1", phi1), ("phi2", phi2)):
            arr = np.array(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def alpha_min(self) -> float:
        return float(self.alpha_grid[0])

    @property
    def alpha_max(self) -> float:
        return float(self.alpha_grid[-1])

    def node(self, i: int, j: int) -> tuple[float, float]:
        return float(self.phi1[i, j]), float(self.phi2[i, j])

    def _symmetric(self):
        b = self.beta_grid
        beta_sym = np.concatenate([-b[:0:-1], b])
        phi1 = np.concatenate([self.phi1[:, :0:-1], self.phi1], axis=1)
        phi2 = np.concatenate([-self.phi2[:, :0:-1], self.phi2], axis=1)
        k = len(self.levels)
        mirrored = -self.quantiles[:, :0:-1, ::-1]
        qs = np.concatenate([mirrored, self.quantiles], axis=1)
        assert qs.shape[2] == k
        return beta_sym, phi1, phi2, qs

    @cached_property
    def spline(self) -> "_Surfaces":
        return _Surfaces(self, 3)

    @cached_property
    def linear(self) -> "_Surfaces":
        return _Surfaces(self, 1)

    def surfaces(self, method: str) -> "_Surfaces":
        if method == "spline":
            return self.spline
        if method == "linear":
            return self.linear
        raise ValueError(f"unknown interpolation method {method!r}")

    def standard_quantiles(self, alpha: float, beta: float, method: str = "auto") -> np.ndarray:
        """Interpolated quantiles of S0(alpha, beta, 1, 0) at the table levels."""
        if method == "auto":
            method = "linear" if alpha >= LINEAR_BAND else "spline"
        return self.surfaces(method).quantiles(alpha, beta)


class _Surfaces:
    """Interpolating surfaces over (alpha, beta in [-1, 1])."""

    def __init__(self, tables: LookupTables, degree: int):
        beta_sym, phi1, phi2, qs = tables._symmetric()
        a = tables.alpha_grid
        kw = dict(kx=degree, ky=degree, s=0)
        self._phi1 = RectBivariateSpline(a, beta_sym, phi1, **kw)
        self._phi2 = RectBivariateSpline(a, beta_sym, phi2, **kw)
        self._q = [RectBivariateSpline(a, beta_sym, qs[:, :, k], **kw) for k in range(qs.shape[2])]
        self.degree = degree

    def phi(self, alpha, beta):
        return float(self._phi1.ev(alpha, beta)), float(self._phi2.ev(alpha, beta))

    def phi1(self, alpha, beta):
        return float(self._phi1.ev(alpha, beta))

    def phi2(self, alpha, beta):
        return float(self._phi2.ev(alpha, beta))

    def jacobian(self, alpha, beta):
        return np.array(
            [
                [float(self._phi1.ev(alpha, beta, dx=1)), float(self._phi1.ev(alpha, beta, dy=1))],
                [float(self._phi2.ev(alpha, beta, dx=1)), float(self._phi2.ev(alpha, beta, dy=1))],
            ]
        )

    def quantiles(self, alpha, beta):
        return np.array([float(s.ev(alpha, beta)) for s in self._q])


def build_lookup(
    alpha_grid=DEFAULT_ALPHA_GRID,
    beta_grid=DEFAULT_BETA_GRID,
    xtol: float = TABLE_XTOL,
    n_jobs: int = 1,
    progress: Optional[Callable[[int, int], None]] = None,
) -> LookupTables:
    """Tabulate standardised quantiles at every grid node and check monotonicity.

    Rows (one alpha each) are independent; ``n_jobs > 1`` spreads them over
    worker processes without changing any value.
    """
    a, b = _validate_grids(alpha_grid, beta_grid, DEFAULT_LEVELS)
    rows = [None] * a.size
    if n_jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(_node_quantiles, float(al), b, DEFAULT_LEVELS, xtol) for al in a]
            for i, fut in enumerate(futures):
                rows[i] = fut.result()
                if progress:
                    progress(i + 1, a.size)
    else:
        for i, al in enumerate(a):
            rows[i] = _node_quantiles(float(al), b, DEFAULT_LEVELS, xtol)
            if progress:
                progress(i + 1, a.size)
    tables = LookupTables(a, b, np.stack(rows), DEFAULT_LEVELS, xtol)
    _check_monotone(a, b, tables.phi1, tables.phi2)
    return tables


# ---------------------------------------------------------------- file format
#
# little-endian, in order:
#   8 bytes   magic "STQLUT01" (last two characters are the format version)
#   uint32    n_alpha, n_beta, n_levels, 0
#   float64   xtol
#   float64   levels[n_levels], alpha_grid[n_alpha], beta_grid[n_beta]
#   float64   phi1[n_alpha * n_beta]      row-major, alpha varies slowest
#   float64   phi2[n_alpha * n_beta]
#   float64   quantiles[n_alpha * n_beta * n_levels]
#   32 bytes  SHA-256 of all preceding bytes


def _header(alpha_grid, beta_grid, levels, xtol) -> bytes:
    parts = [
        FORMAT_MAGIC,
        struct.pack("<4I", len(alpha_grid), len(beta_grid), len(levels), 0),
        struct.pack("<d", xtol),
        np.asarray(levels, dtype="<f8").tobytes(),
        np.asarray(alpha_grid, dtype="<f8").tobytes(),
        np.asarray(beta_grid, dtype="<f8").tobytes(),
    ]
    return b"".join(parts)


def tables_to_bytes(tables: LookupTables) -> bytes:
    body = b"".join(
        [
            _header(tables.alpha_grid, tables.beta_grid, tables.levels, tables.xtol),
            np.ascontiguousarray(tables.phi1, dtype="<f8").tobytes(),
            np.ascontiguousarray(tables.phi2, dtype="<f8").tobytes(),
            np.ascontiguousarray(tables.quantiles, dtype="<f8").tobytes(),
        ]
    )
    return body + hashlib.sha256(body).digest()


def tables_from_bytes(data: bytes) -> LookupTables:
    if data[:8] != FORMAT_MAGIC:
        raise ValueError("not a lookup-table file (bad magic or version)")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ValueError("lookup-table checksum mismatch")
    na, nb, nl, _ = struct.unpack_from("<4I", data, 8)
    xtol = struct.unpack_from("<d", data, 24)[0]
    offset = 32
    arrays = []
    for count in (nl, na, nb, na * nb, na * nb, na * nb * nl):
        arrays.append(np.frombuffer(data, dtype="<f8", count=count, offset=offset).astype(float))
        offset += 8 * count
    if offset != len(body):
        raise ValueError("lookup-table file has unexpected length")
    levels, a, b, phi1, phi2, qs = arrays
    tables = LookupTables(a, b, qs.reshape(na, nb, nl), tuple(levels), xtol)
    if not (np.array_equal(tables.phi1.ravel(), phi1) and np.array_equal(tables.phi2.ravel(), phi2)):
        raise ValueError("stored phi tables disagree with stored quantiles")
    return tables


def save_tables(tables: LookupTables, path) -> Path:
    path = Path(path)
    if not path.parent.is_dir():
        raise FileNotFoundError(f"output directory {path.parent} does not exist")
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(tables_to_bytes(tables))
    os.replace(tmp, path)
    return path


def load_tables(path) -> LookupTables:
    return tables_from_bytes(Path(path).read_bytes())


def cache_path(alpha_grid=DEFAULT_ALPHA_GRID, beta_grid=DEFAULT_BETA_GRID, xtol=TABLE_XTOL) -> Path:
    root = os.environ.get(CACHE_ENV) or os.path.join(os.path.expanduser("~"), ".cache", "stablequant")
    key = hashlib.sha256(_header(alpha_grid, beta_grid, DEFAULT_LEVELS, xtol)).hexdigest()[:16]
    return Path(root) / f"lookup-{key}.bin"


def _stderr_progress(done, total):
    if done == total or done % 10 == 0:
        print(f"lookup table: {done}/{total} alpha rows", file=sys.stderr)


@lru_cache(maxsize=1)
def default_tables() -> LookupTables:
    """Default-grid tables: cache directory first, then the packaged copy, else build."""
    cached = cache_path()
    for candidate in (cached, _PACKAGED_TABLE):
        if candidate.is_file():
            try:
                return load_tables(candidate)
            except ValueError:
                continue
    tables = build_lookup(progress=_stderr_progress)
    try:
        cached.parent.mkdir(parents=True, exist_ok=True)
        save_tables(tables, cached)
    except OSError:
        pass
    return tables


# ---------------------------------------------------------------- inversion


def _nearest_node(tables: LookupTables, va: float, vb: float):
    r1 = (tables.phi1 - va) / va
    r2 = tables.phi2 - vb
    i, j = np.unravel_index(np.argmin(r1 * r1 + r2 * r2), r1.shape)
    return float(tables.alpha_grid[i]), float(tables.beta_grid[j])


def _newton(surf: _Surfaces, va, vb, start, box, tol=1e-12, max_iter=60):
    (a_lo, a_hi), (b_lo, b_hi) = box
    x = np.array(start, dtype=float)
    target = np.array([va, vb])
    r = np.array(surf.phi(*x)) - target
    for _ in range(max_iter):
        if abs(r[0]) <= tol * va and abs(r[1]) <= tol:
            return x, True
        try:
            step = np.linalg.solve(surf.jacobian(*x), -r)
        except np.linalg.LinAlgError:
            return x, False
        norm = np.abs(r).sum()
        t = 1.0
        while t > 1e-6:
            trial = np.array([min(max(x[0] + t * step[0], a_lo), a_hi), min(max(x[1] + t * step[1], b_lo), b_hi)])
            r_trial = np.array(surf.phi(*trial)) - target
            if np.abs(r_trial).sum() < norm:
                break
            t *= 0.5
        else:
            return x, False
        x, r = trial, r_trial
    return x, False


def _beta_on_slice(surf: _Surfaces, alpha, vb):
    """beta in [0, 1] with phi2(alpha, beta) = vb >= 0, clamped at 1."""
    top = surf.phi2(alpha, 1.0)
    if vb >= top:
        return 1.0, True
    if vb <= 0.0:
        return 0.0, False
    return optimize.brentq(lambda b: surf.phi2(alpha, b) - vb, 0.0, 1.0, xtol=1e-14, rtol=1e-15), False


def _nested_solve(surf: _Surfaces, tables: LookupTables, va, vb):
    """Bisection fallback: beta solved on each alpha slice, then alpha."""
    flags = set()
    a_lo, a_hi = tables.alpha_min, tables.alpha_max

    def resid(alpha):
        beta, _ = _beta_on_slice(surf, alpha, vb)
        return surf.phi1(alpha, beta) - va

    if resid(a_lo) <= 0.0:
        alpha = a_lo
        flags.add(ALPHA_LOW)
    elif resid(a_hi) >= 0.0:
        alpha = a_hi
        flags.add(ALPHA_HIGH)
        if alpha == 2.0:
            return alpha, 0.0, flags
    else:
        alpha = optimize.brentq(resid, a_lo, a_hi, xtol=1e-14, rtol=1e-15)
    beta, clamped = _beta_on_slice(surf, alpha, vb)
    if clamped:
        flags.add(BETA_CLAMP)
    return alpha, beta, flags


def _invert_with(surf: _Surfaces, tables: LookupTables, va, vb):
    if tables.alpha_max == 2.0 and va <= float(tables.phi1[-1, 0]):
        # Gaussian law: beta is not identified, report the symmetric member
        return 2.0, 0.0, {ALPHA_HIGH}
    if surf.degree < 3:
        # piecewise-bilinear surfaces have no usable derivative; bisect
        return _nested_solve(surf, tables, va, vb)
    box = ((tables.alpha_min, tables.alpha_max), (0.0, 1.0))
    x, ok = _newton(surf, va, vb, _nearest_node(tables, va, vb), box)
    if ok:
        return float(x[0]), float(x[1]), set()
    return _nested_solve(surf, tables, va, vb)


def invert_v(
    tables: Optional[LookupTables],
    v_alpha: float,
    v_beta: float,
    method: str = "auto",
) -> tuple[float, float, frozenset]:
    """(alpha, beta) with phi1 = v_alpha and phi2 = v_beta, plus clamp flags.

    v_alpha at or below the Gaussian value gives alpha = 2 and beta = 0, since
    beta does not affect the Gaussian law.
    Out-of-range v_beta clamps beta to +-1 and v_alpha above the table clamps
    alpha to the smallest grid value.  ``method`` is 'spline', 'linear' or
    'auto' (spline, switching to bilinear when the answer lands in the band
    alpha >= LINEAR_BAND).
    """
    tables = tables or default_tables()
    if not (math.isfinite(v_alpha) and math.isfinite(v_beta)):
        raise ValueError("v statistics must be finite")
    sign = -1.0 if v_beta < 0.0 else 1.0
    va, vb = float(v_alpha), abs(float(v_beta))
    first = "spline" if method == "auto" else method
    alpha, beta, flags = _invert_with(tables.surfaces(first), tables, va, vb)
    if method == "auto" and alpha >= LINEAR_BAND:
        alpha, beta, flags = _invert_with(tables.linear, tables, va, vb)
    return alpha, sign * beta, frozenset(flags)


# ---------------------------------------------------------------- estimation


@dataclass(frozen=True)
class EstimationResult:
    params: StableParams
    quantiles_used: QuantileSet
    covariance: Optional[CovMatrix] = None
    flags: frozenset = frozenset()
    v: tuple[float, float] = (math.nan, math.nan)

    @property
    def clamped(self) -> bool:
        return bool(self.flags)


def estimate_params(
    q: QuantileSet,
    tables: Optional[LookupTables] = None,
    method: str = "auto",
    standard: str = "table",
) -> EstimationResult:
    """Estimate (alpha, beta, gamma, delta) from five quantiles.

    ``standard='table'`` interpolates the standardised quantiles from the
    lookup table; ``'exact'`` recomputes them with stable_quantile.
    """
    tables = tables or default_tables()
    va, vb = v_stats(q)
    alpha, beta, flags = invert_v(tables, va, vb, method)
    beta = min(1.0, max(-1.0, beta))
    if standard == "table":
        interp = method if method != "auto" else ("linear" if alpha >= LINEAR_BAND else "spline")
        std = tables.surfaces(interp).quantiles(alpha, beta)
    elif standard == "exact":
        std = stable_quantile(StableParams(alpha, beta), np.asarray(DEFAULT_LEVELS))
    else:
        raise ValueError(f"unknown standard-quantile source {standard!r}")
    s25, s50, s75 = std[1], std[2], std[3]
    gamma = (q[0.75] - q[0.25]) / (s75 - s25)
    delta = q[0.50] - gamma * s50
    return EstimationResult(StableParams(alpha, beta, gamma, delta), q, None, flags, (va, vb))
