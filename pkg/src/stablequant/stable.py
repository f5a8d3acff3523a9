"""Alpha-stable laws in Nolan's S0 parameterisation.

Density and distribution function come from the single-integral
representation, integrated adaptively after splitting at the peak of the
integrand.  Far tails switch to the asymptotic tail series once it has
converged.  Quantiles are found by bracketed root finding on the
distribution function, and variates by the Chambers-Mallows-Stuck transform.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

from . import _kernels

__all__ = [
    "StableParams",
    "QuadratureError",
    "QuadratureWarning",
    "stable_pdf",
    "stable_cdf",
    "stable_sf",
    "stable_quantile",
    "stable_sample",
    "make_rng",
]

QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-8
QUAD_LIMIT = 200
# an error estimate above this is not a tolerance miss but a failure
QUAD_FAIL_ABSERR = 1e-6

ALPHA_ONE_BAND = 1e-4
TAIL_TERMS = 30
TAIL_RTOL = 1e-12
TAIL_MIN_DISTANCE = 4.0

_HALF_PI = 0.5 * math.pi


class QuadratureError(ArithmeticError):
    """Adaptive quadrature did not converge to a usable accuracy."""

    def __init__(self, message: str, abserr: float):
        super().__init__(f"{message} (estimated abs error {abserr:.3g})")
        self.abserr = abserr


class QuadratureWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class StableParams:
    """S0(alpha, beta, gamma, delta) parameters of a stable law."""

    alpha: float
    beta: float = 0.0
    gamma: float = 1.0
    delta: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.alpha <= 2.0):
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not (-1.0 <= self.beta <= 1.0):
            raise ValueError(f"beta must lie in [-1, 1], got {self.beta}")
        if not (self.gamma > 0.0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive and finite, got {self.gamma}")
        if not math.isfinite(self.delta):
            raise ValueError(f"delta must be finite, got {self.delta}")

    @property
    def standard(self) -> "StableParams":
        """The same law with gamma=1, delta=0."""
        return StableParams(self.alpha, self.beta, 1.0, 0.0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.alpha, self.beta, self.gamma, self.delta)


def _effective_alpha(alpha: float) -> float:
    if alpha != 1.0 and abs(alpha - 1.0) < ALPHA_ONE_BAND * (1.0 - 1e-9):
        nudged = 1.0 + math.copysign(ALPHA_ONE_BAND, alpha - 1.0)
        warnings.warn(
            f"alpha={alpha!r} is within {ALPHA_ONE_BAND} of 1; evaluating at {nudged}",
            RuntimeWarning,
            stacklevel=3,
        )
        return nudged
    return alpha


def _quad(func, lo, hi, args):
    if not hi > lo:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, abserr, info = integrate.quad(
            func, lo, hi, args=args, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL,
            limit=QUAD_LIMIT, full_output=1,
        )[:3]
    tol = max(QUAD_EPSABS, QUAD_EPSREL * abs(value))
    if abserr > tol:
        if abserr > QUAD_FAIL_ABSERR:
            raise QuadratureError("stable integral failed to converge", abserr)
        warnings.warn(
            f"stable integral error estimate {abserr:.3g} exceeds tolerance {tol:.3g}",
            QuadratureWarning,
            stacklevel=4,
        )
    return value


# log g levels cutting the theta range; 0 is the pdf peak, and beyond the
# outer levels the integrands are below 1e-15
_CUTS = (-36.0, -24.0, -14.0, -8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 3.7)


def _breakpoints(lo, hi, kind, a, b, c):
    pts = [lo, hi]
    for level in _CUTS:
        pts.append(_kernels.level_crossing(lo, hi, kind, a, b, c, level))
    return sorted(set(pts))


def _pdf_integral(lo, hi, kind, a, b, c):
    pts = _breakpoints(lo, hi, kind, a, b, c)
    args = (float(kind), a, b, c)
    return sum(_quad(_kernels.PDF_INTEGRAND, x0, x1, args) for x0, x1 in zip(pts[:-1], pts[1:]))


def _tail_integrals(lo, hi, kind, a, b, c):
    """(int exp(-g), int 1 - exp(-g)) over (lo, hi).

    Each segment integrates whichever of the two is small there and gets the
    other as the complement, so neither loses relative accuracy.
    """
    pts = _breakpoints(lo, hi, kind, a, b, c)
    args = (float(kind), a, b, c)
    total_e = 0.0
    total_m = 0.0
    for x0, x1 in zip(pts[:-1], pts[1:]):
        if not x1 > x0:
            continue
        lg = _kernels.log_g(0.5 * (x0 + x1), kind, a, b, c)
        if lg < 0.0:
            m = _quad(_kernels.ONE_MINUS_EXP_NEG_G, x0, x1, args)
            total_m += m
            total_e += (x1 - x0) - m
        else:
            e = _quad(_kernels.EXP_NEG_G, x0, x1, args)
            total_e += e
            total_m += (x1 - x0) - e
    return total_e, total_m


# --- alpha != 1 -----------------------------------------------------------


def _zeta_theta0(alpha, beta):
    t = math.tan(_HALF_PI * alpha)
    return -beta * t, math.atan(beta * t) / alpha


def _upper_setup(s, alpha, theta0):
    """Integration constants for x - zeta = s > 0."""
    c = (alpha / (alpha - 1.0)) * math.log(s) + math.log(math.cos(alpha * theta0)) / (alpha - 1.0)
    return -theta0, _HALF_PI, c


def _tail_series(s, alpha, theta0):
    """Upper-tail expansion at distance s from zeta; returns (pdf, sf) or None.

    pdf ~ (1/pi) sum_k (-1)^(k+1) c^k Gamma(k alpha + 1)/k! sin(k alpha (pi/2 + theta0)) s^(-k alpha - 1)
    with c = sec(alpha * theta0).
    """
    if s < TAIL_MIN_DISTANCE:
        return None
    log_s = math.log(s)
    log_c = -math.log(math.cos(alpha * theta0))
    ang = alpha * (_HALF_PI + theta0)
    if abs(math.sin(ang)) < 1e-6:
        # light (sub-exponential) tail: every term vanishes
        return None
    pdf = 0.0
    sf = 0.0
    prev = math.inf
    for k in range(1, TAIL_TERMS + 1):
        log_mag = k * log_c - k * alpha * log_s - special.gammaln(k + 1.0)
        sgn = 1.0 if k % 2 == 1 else -1.0
        sk = math.sin(k * ang)
        term_sf = sgn * sk * math.exp(log_mag + special.gammaln(k * alpha)) / math.pi
        term_pdf = sgn * sk * math.exp(log_mag + special.gammaln(k * alpha + 1.0) - log_s) / math.pi
        bound = math.exp(log_mag + special.gammaln(k * alpha + 1.0) - log_s) / math.pi
        if bound > prev:
            # asymptotic series started to diverge before converging
            return None
        pdf += term_pdf
        sf += term_sf
        prev = bound
        if pdf > 0.0 and sf > 0.0 and bound < TAIL_RTOL * pdf and bound * s < TAIL_RTOL * sf:
            return pdf, sf
    return None


def _std_pdf_upper(s, alpha, beta, theta0):
    series = _tail_series(s, alpha, theta0)
    if series is not None:
        return series[0]
    lo, hi, c = _upper_setup(s, alpha, theta0)
    integral = _pdf_integral(lo, hi, 0, alpha, theta0, c)
    return alpha * integral / (math.pi * abs(alpha - 1.0) * s)


def _std_tails_upper(s, alpha, beta, theta0):
    """(cdf, sf) at x = zeta + s, s > 0."""
    series = _tail_series(s, alpha, theta0)
    if series is not None:
        sf = series[1]
        return 1.0 - sf, sf
    lo, hi, c = _upper_setup(s, alpha, theta0)
    int_e, int_m = _tail_integrals(lo, hi, 0, alpha, theta0, c)
    if alpha > 1.0:
        sf = int_e / math.pi
        return 1.0 - sf, sf
    return (_HALF_PI - theta0 + int_e) / math.pi, int_m / math.pi


def _pdf_at_zeta(alpha, beta, zeta, theta0):
    return (math.gamma(1.0 + 1.0 / alpha) * math.cos(theta0)
            / (math.pi * (1.0 + zeta * zeta) ** (0.5 / alpha)))


def _std_pdf_general(z, alpha, beta):
    zeta, theta0 = _zeta_theta0(alpha, beta)
    s = z - zeta
    if abs(s) <= 1e-9 * max(1.0, abs(zeta)):
        return _pdf_at_zeta(alpha, beta, zeta, theta0)
    if s > 0:
        return _std_pdf_upper(s, alpha, beta, theta0)
    return _std_pdf_upper(-s, alpha, -beta, -theta0)


def _std_tails_general(z, alpha, beta):
    zeta, theta0 = _zeta_theta0(alpha, beta)
    s = z - zeta
    if s == 0.0:
        cdf = (_HALF_PI - theta0) / math.pi
        return cdf, 1.0 - cdf
    if s > 0:
        return _std_tails_upper(s, alpha, beta, theta0)
    cdf_r, sf_r = _std_tails_upper(-s, alpha, -beta, -theta0)
    return sf_r, cdf_r


# --- alpha == 1 -----------------------------------------------------------


def _alpha1_c(z, beta):
    return -math.pi * z / (2.0 * beta) + _kernels._LOG_2_OVER_PI


def _std_pdf_alpha1(z, beta):
    if beta == 0.0:
        return 1.0 / (math.pi * (1.0 + z * z))
    if beta < 0.0:
        z, beta = -z, -beta
    c = _alpha1_c(z, beta)
    integral = _pdf_integral(-_HALF_PI, _HALF_PI, 1, beta, 0.0, c)
    return integral / (2.0 * beta)


def _std_tails_alpha1(z, beta):
    if beta == 0.0:
        if z > 0:
            sf = math.atan2(1.0, z) / math.pi
            return 1.0 - sf, sf
        cdf = math.atan2(1.0, -z) / math.pi
        return cdf, 1.0 - cdf
    flip = beta < 0.0
    if flip:
        z, beta = -z, -beta
    c = _alpha1_c(z, beta)
    int_e, int_m = _tail_integrals(-_HALF_PI, _HALF_PI, 1, beta, 0.0, c)
    cdf, sf = int_e / math.pi, int_m / math.pi
    return (sf, cdf) if flip else (cdf, sf)


# --- dispatch -------------------------------------------------------------


def _std_pdf(z, alpha, beta):
    if alpha == 2.0:
        return math.exp(-0.25 * z * z) / (2.0 * math.sqrt(math.pi))
    if alpha == 1.0:
        return _std_pdf_alpha1(z, beta)
    return _std_pdf_general(z, alpha, beta)


def _std_tails(z, alpha, beta):
    if alpha == 2.0:
        return float(special.ndtr(z / math.sqrt(2.0))), float(special.ndtr(-z / math.sqrt(2.0)))
    if alpha == 1.0:
        return _std_tails_alpha1(z, beta)
    return _std_tails_general(z, alpha, beta)


def _map_scalar(fn, x):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return fn(float(arr))
    out = np.empty(arr.shape)
    flat = out.reshape(-1)
    for i, xi in enumerate(arr.reshape(-1)):
        flat[i] = fn(float(xi))
    return out


def stable_pdf(params: StableParams, x):
    """Density of S0(alpha, beta, gamma, delta) at x (scalar or array)."""
    alpha = _effective_alpha(params.alpha)
    beta, gamma, delta = params.beta, params.gamma, params.delta

    def one(xi):
        if not math.isfinite(xi):
            return 0.0
        return max(_std_pdf((xi - delta) / gamma, alpha, beta), 0.0) / gamma

    return _map_scalar(one, x)


def _tails(params: StableParams, x, which: int):
    alpha = _effective_alpha(params.alpha)
    beta, gamma, delta = params.beta, params.gamma, params.delta

    def one(xi):
        if math.isinf(xi):
            return float((xi > 0) == (which == 0))
        value = _std_tails((xi - delta) / gamma, alpha, beta)[which]
        return min(max(value, 0.0), 1.0)

    return _map_scalar(one, x)


def stable_cdf(params: StableParams, x):
    """P(X <= x) for X ~ S0(alpha, beta, gamma, delta)."""
    return _tails(params, x, 0)


def stable_sf(params: StableParams, x):
    """P(X > x), computed without cancellation in the upper tail."""
    return _tails(params, x, 1)


def _initial_guess(alpha, beta, p):
    # blend of Cauchy and Gaussian quantiles, shifted towards the skewed side
    cauchy = math.tan(math.pi * (p - 0.5))
    gauss = math.sqrt(2.0) * float(special.ndtri(p))
    w = min(max(alpha - 1.0, 0.0), 1.0)
    return (1.0 - w) * cauchy + w * gauss


def _std_quantile(alpha, beta, p, xtol):
    if alpha == 2.0:
        return math.sqrt(2.0) * float(special.ndtri(p))
    if alpha == 1.0 and beta == 0.0:
        return math.tan(math.pi * (p - 0.5))
    if p <= 0.5:
        def objective(z):
            return _std_tails(z, alpha, beta)[0] - p
    else:
        q = 1.0 - p

        def objective(z):
            return q - _std_tails(z, alpha, beta)[1]

    x0 = _initial_guess(alpha, beta, p)
    step = max(1.0, abs(x0))
    lo, hi = x0 - step, x0 + step
    f_lo, f_hi = objective(lo), objective(hi)
    for _ in range(200):
        if f_lo <= 0.0 <= f_hi:
            break
        if f_lo > 0.0:
            hi, f_hi = lo, f_lo
            step *= 2.0
            lo = hi - step
            f_lo = objective(lo)
        else:
            lo, f_lo = hi, f_hi
            step *= 2.0
            hi = lo + step
            f_hi = objective(hi)
    else:
        raise ArithmeticError(f"could not bracket the {p} quantile for alpha={alpha}, beta={beta}")
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    return optimize.brentq(objective, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)


def stable_quantile(params: StableParams, p, xtol: float = 1e-12):
    """Quantile inf{x : F(x) >= p} of S0(alpha, beta, gamma, delta)."""
    alpha = _effective_alpha(params.alpha)
    beta, gamma, delta = params.beta, params.gamma, params.delta

    def one(pi):
        if not (0.0 < pi < 1.0):
            raise ValueError(f"probability must lie in (0, 1), got {pi}")
        return gamma * _std_quantile(alpha, beta, pi, xtol) + delta

    return _map_scalar(one, p)


# --- sampling -------------------------------------------------------------


def make_rng(seed, *stream) -> np.random.Generator:
    """Counter-based generator for ``seed``; extra integers select a substream.

    Stream elements must fit in 32 bits so that distinct streams never share
    an encoding.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be non-negative")
    key = tuple(int(s) for s in stream)
    if any(not (0 <= s < 2**32) for s in key):
        raise ValueError("stream elements must lie in [0, 2**32)")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def _cms_standard(alpha, beta, v, w):
    """Chambers-Mallows-Stuck draws of S0(alpha, beta, 1, 0).

    For alpha != 1 the S1 variate minus beta*tan(pi*alpha/2) is rewritten with
    expm1 so that the result stays continuous as alpha -> 1.
    """
    if alpha == 2.0:
        return 2.0 * np.sqrt(w) * np.sin(v)
    if alpha == 1.0:
        if beta == 0.0:
            return np.tan(v)
        lead = _HALF_PI + beta * v
        return (lead * np.tan(v) - beta * np.log(_HALF_PI * w * np.cos(v) / lead)) / _HALF_PI
    t = math.tan(_HALF_PI * alpha)
    bt = beta * t
    expo = (1.0 - alpha) / alpha
    cos_v = np.cos(v)
    z = (np.cos((1.0 - alpha) * v) + bt * np.sin((1.0 - alpha) * v)) / w
    log_common = -np.log(cos_v) / alpha + expo * np.log(z)
    sin_part = np.sin(alpha * v) * np.exp(log_common)
    # bt * (cos(alpha v) cos(v)^(-1/alpha) z^expo - 1); expm1 only where the log exists
    cos_av = np.cos(alpha * v)
    with np.errstate(invalid="ignore", divide="ignore"):
        smooth = np.expm1(np.log(cos_av) + log_common)
    skew_part = bt * np.where(cos_av > 0.0, smooth, cos_av * np.exp(log_common) - 1.0)
    return sin_part + skew_part


def stable_sample(params: StableParams, n: int, seed=0) -> np.ndarray:
    """n draws from S0(alpha, beta, gamma, delta).

    ``seed`` is an integer (fresh counter-based stream) or a Generator whose
    state is advanced.  Each variate consumes one uniform and one exponential.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = make_rng(seed)
    alpha = _effective_alpha(params.alpha)
    u = rng.random(n)
    w = rng.standard_exponential(n)
    v = math.pi * (u - 0.5)
    x = _cms_standard(alpha, params.beta, v, w)
    return params.gamma * x + params.delta
