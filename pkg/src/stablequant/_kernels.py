"""Compiled integrands for the S0 density and distribution function.

The integrals follow Nolan's single-integral representation.  Each integrand
receives ``xx = (theta, kind, a, b, c)`` where ``kind`` selects the alpha != 1
form (0) or the alpha == 1 form (1); see ``log_g`` for the meaning of the
remaining slots.
"""

import math

import numba
from numba import cfunc, types
from scipy import LowLevelCallable

_HALF_PI = 0.5 * math.pi
_LOG_2_OVER_PI = math.log(2.0 / math.pi)
_EXP_CUTOFF = 745.0


@numba.njit(cache=True)
def log_g(theta, kind, a, b, c):
    """log of the exponent function g(theta).

    kind 0: a = alpha, b = theta0, c = alpha/(alpha-1) * log(x - zeta)
            + log(cos(alpha*theta0)) / (alpha-1)
    kind 1: a = beta (> 0), c = -pi*x/(2*beta) + log(2/pi)
    """
    if kind == 0:
        alpha = a
        theta0 = b
        ratio = alpha / (alpha - 1.0)
        cos_t = math.cos(theta)
        sin_t = math.sin(alpha * (theta0 + theta))
        cos_r = math.cos(alpha * theta0 + (alpha - 1.0) * theta)
        if cos_t <= 0.0 or sin_t <= 0.0 or cos_r <= 0.0:
            return math.nan
        return (c + ratio * (math.log(cos_t) - math.log(sin_t))
                + math.log(cos_r) - math.log(cos_t))
    beta = a
    cos_t = math.cos(theta)
    lead = _HALF_PI + beta * theta
    if cos_t <= 0.0 or lead <= 0.0:
        return math.nan
    return c + math.log(lead) - math.log(cos_t) + lead * math.tan(theta) / beta


@numba.njit(cache=True)
def _g_exp_g(lg):
    # g < 1e-323 or g > 742: product underflows
    if lg != lg or lg < -_EXP_CUTOFF or lg > 6.61:
        return 0.0
    g = math.exp(lg)
    return g * math.exp(-g)


@numba.njit(cache=True)
def _exp_neg_g(lg):
    if lg != lg:
        return 0.0
    if lg < -_EXP_CUTOFF:
        return 1.0
    if lg > 6.61:
        return 0.0
    return math.exp(-math.exp(lg))


@numba.njit(cache=True)
def _one_minus_exp_neg_g(lg):
    if lg != lg:
        return 0.0
    if lg < -_EXP_CUTOFF:
        return 0.0
    if lg > 6.61:
        return 1.0
    return -math.expm1(-math.exp(lg))


_SIG = types.double(types.intc, types.CPointer(types.double))


@cfunc(_SIG, cache=True)
def _pdf_integrand(n, xx):
    return _g_exp_g(log_g(xx[0], int(xx[1]), xx[2], xx[3], xx[4]))


@cfunc(_SIG, cache=True)
def _cdf_integrand(n, xx):
    return _exp_neg_g(log_g(xx[0], int(xx[1]), xx[2], xx[3], xx[4]))


@cfunc(_SIG, cache=True)
def _sf_integrand(n, xx):
    return _one_minus_exp_neg_g(log_g(xx[0], int(xx[1]), xx[2], xx[3], xx[4]))


PDF_INTEGRAND = LowLevelCallable(_pdf_integrand.ctypes)
EXP_NEG_G = LowLevelCallable(_cdf_integrand.ctypes)
ONE_MINUS_EXP_NEG_G = LowLevelCallable(_sf_integrand.ctypes)


@numba.njit(cache=True)
def level_crossing(lo, hi, kind, a, b, c, level):
    """Bisect for the theta where log g crosses ``level``.

    g is monotone on (lo, hi); returns the nearer endpoint when no crossing
    exists.
    """
    width = hi - lo
    x_lo = lo + 1e-12 * width
    x_hi = hi - 1e-12 * width
    f_lo = log_g(x_lo, kind, a, b, c)
    f_hi = log_g(x_hi, kind, a, b, c)
    if f_lo != f_lo or f_hi != f_hi:
        # walk inwards until both ends are finite
        for k in range(1, 64):
            t = k / 64.0
            if f_lo != f_lo:
                x_lo = lo + t * 1e-3 * width
                f_lo = log_g(x_lo, kind, a, b, c)
            if f_hi != f_hi:
                x_hi = hi - t * 1e-3 * width
                f_hi = log_g(x_hi, kind, a, b, c)
        if f_lo != f_lo or f_hi != f_hi:
            return 0.5 * (lo + hi)
    f_lo -= level
    f_hi -= level
    if f_lo > 0.0 and f_hi > 0.0:
        return lo if f_lo < f_hi else hi
    if f_lo < 0.0 and f_hi < 0.0:
        return lo if f_lo > f_hi else hi
    increasing = f_hi > f_lo
    left = x_lo
    right = x_hi
    for _ in range(200):
        mid = 0.5 * (left + right)
        if mid <= left or mid >= right:
            break
        fm = log_g(mid, kind, a, b, c)
        if fm != fm:
            return mid
        if (fm > level) == increasing:
            right = mid
        else:
            left = mid
    return 0.5 * (left + right)
