"""Acceptance criteria; each test records one PASS/FAIL line in the terminal summary."""

import math
import time

import numpy as np
import pytest
from scipy import special

from stablequant.cli import run_tables, write_tables
from stablequant.delta import numeric_jacobian
from stablequant.mcculloch import estimate_params, v_stats
from stablequant.quantile_cov import (
    DEFAULT_LEVELS,
    QuantileSet,
    g1_matrix,
    population_quantiles,
    sigma_iid,
    sigma_quantiles,
)
from stablequant.simulation import TABLE_ROWS, TABLE_THETAS, analytic_covariance, run_estimates
from stablequant.sma import SmaModel, aggregate_params
from stablequant.stable import StableParams, make_rng, stable_cdf, stable_pdf, stable_quantile, stable_sample

LENGTH = 720
PARAMS = ("alpha", "beta", "gamma", "delta")

# Reference values per (alpha, beta0) row in TABLE_ROWS order.
# Asymptotic n*Var for theta1 = 0, 0.2, 0.4 (gamma and delta: theta1 = 0, 0.4 only).
ASYM_REF = {
    "alpha": [
        (2.555, 2.740, 3.200), (2.833, 3.040, 3.568), (3.975, 4.257, 5.058),
        (3.852, 3.984, 4.348), (4.076, 4.217, 4.611), (5.207, 5.384, 5.919),
        (9.471, 9.544, 9.783), (9.536, 9.611, 9.853), (9.902, 9.981, 10.24),
    ],
    "beta": [
        (8.684, 10.91, 12.94), (7.677, 9.657, 11.44), (4.223, 5.199, 6.046),
        (11.67, 13.27, 15.52), (11.16, 12.60, 14.63), (11.44, 12.24, 13.45),
        (53.62, 55.74, 60.59), (63.83, 65.85, 70.58), (118.5, 120.0, 124.1),
    ],
    "gamma": [
        (7.983, None, 16.32), (8.648, None, 17.52), (10.80, None, 21.15),
        (6.553, None, 10.45), (6.633, None, 10.54), (6.877, None, 10.77),
        (6.272, None, 8.482), (6.267, None, 8.473), (6.227, None, 8.408),
    ],
    "delta": [
        (13.05, None, 28.32), (13.19, None, 28.62), (14.11, None, 30.41),
        (15.49, None, 27.46), (15.61, None, 27.68), (16.58, None, 29.24),
        (19.50, None, 30.46), (19.61, None, 30.59), (20.10, None, 31.24),
    ],
}

# Monte-Carlo (mean, sd, n*Var) from 2000 realisations of length 720.
SIM_REF = {
    "alpha": [
        [(1.195, .061, 2.682), (1.195, .063, 2.891), (1.194, .068, 3.322)],
        [(1.196, .062, 2.746), (1.199, .067, 3.224), (1.198, .072, 3.702)],
        [(1.202, .076, 4.134), (1.201, .076, 4.204), (1.200, .084, 5.074)],
        [(1.503, .076, 4.105), (1.504, .079, 4.472), (1.502, .080, 4.604)],
        [(1.504, .078, 4.346), (1.506, .081, 4.693), (1.505, .087, 5.466)],
        [(1.505, .087, 5.384), (1.506, .091, 5.907), (1.506, .094, 6.375)],
        [(1.808, .108, 8.389), (1.809, .107, 8.160), (1.809, .109, 8.495)],
        [(1.810, .109, 8.515), (1.808, .110, 8.678), (1.806, .109, 8.614)],
        [(1.809, .106, 8.083), (1.808, .108, 8.353), (1.809, .110, 8.669)],
    ],
    "beta": [
        [(0.000, .105, 7.961), (0.002, .121, 10.46), (0.001, .131, 12.30)],
        [(0.193, .101, 7.408), (0.196, .113, 9.230), (0.194, .124, 11.03)],
        [(0.498, .082, 4.866), (0.495, .089, 5.751), (0.494, .098, 6.852)],
        [(-0.001, .127, 11.60), (0.001, .140, 14.10), (0.000, .151, 16.44)],
        [(0.202, .140, 14.06), (0.204, .139, 13.88), (0.203, .151, 16.33)],
        [(0.525, .147, 15.44), (0.522, .152, 16.70), (0.520, .156, 17.57)],
        [(-0.008, .367, 97.20), (0.008, .369, 97.76), (0.000, .375, 101.5)],
        [(0.223, .367, 97.40), (0.202, .381, 104.4), (0.186, .380, 104.1)],
        [(0.488, .334, 80.51), (0.488, .347, 86.49), (0.484, .353, 89.85)],
    ],
    "gamma": [
        [(1.991, .104, 7.751), None, (2.523, .153, 16.82)],
        [(1.992, .112, 9.000), None, (2.535, .156, 17.58)],
        [(2.001, .123, 10.83), None, (2.543, .171, 21.14)],
        [(2.000, .097, 6.822), None, (2.322, .120, 10.32)],
        [(1.997, .094, 6.290), None, (2.318, .120, 10.37)],
        [(2.000, .098, 6.838), None, (2.321, .125, 11.24)],
        [(2.000, .093, 6.162), None, (2.204, .108, 8.407)],
        [(2.000, .094, 6.417), None, (2.200, .108, 8.378)],
        [(2.003, .093, 6.146), None, (2.210, .111, 8.799)],
    ],
    "delta": [
        [(0.998, .130, 12.15), None, (1.398, .194, 27.04)],
        [(1.003, .134, 12.95), None, (1.558, .197, 27.97)],
        [(1.001, .139, 14.00), None, (1.812, .208, 31.15)],
        [(1.001, .143, 14.73), None, (1.397, .200, 28.71)],
        [(1.005, .148, 15.73), None, (1.500, .198, 28.22)],
        [(0.993, .150, 16.27), None, (1.633, .201, 29.09)],
        [(0.997, .160, 18.49), None, (1.395, .202, 29.35)],
        [(1.010, .159, 18.15), None, (1.454, .199, 28.62)],
        [(1.018, .160, 18.35), None, (1.512, .203, 29.80)],
    ],
}

GAMMA_REF = {0.0: [2.000] * 9, 0.4: [2.541] * 3 + [2.325] * 3 + [2.205] * 3}
DELTA_REF = {0.0: [1.000] * 9, 0.4: [1.400, 1.559, 1.798, 1.400, 1.495, 1.638, 1.400, 1.439, 1.497]}

GRID_P = np.round(np.arange(1, 100) / 100.0, 2)


def model_for(alpha, beta, theta1):
    return SmaModel((1.0, theta1) if theta1 else (1.0,), StableParams(alpha, beta, 2.0, 1.0))


def test_criterion_1_closed_forms(acceptance):
    started = time.perf_counter()
    x = np.linspace(-10, 10, 201)
    gauss, cauchy = StableParams(2.0), StableParams(1.0)
    errs = [
        np.max(np.abs(stable_pdf(gauss, x) - np.exp(-x * x / 4) / (2 * math.sqrt(math.pi)))),
        np.max(np.abs(stable_cdf(gauss, x) - special.ndtr(x / math.sqrt(2)))),
        np.max(np.abs(stable_quantile(gauss, GRID_P) - math.sqrt(2) * special.ndtri(GRID_P))),
        np.max(np.abs(stable_pdf(cauchy, x) - 1 / (math.pi * (1 + x * x)))),
        np.max(np.abs(stable_cdf(cauchy, x) - (0.5 + np.arctan(x) / math.pi))),
        np.max(np.abs(stable_quantile(cauchy, GRID_P) - np.tan(math.pi * (GRID_P - 0.5)))),
    ]
    elapsed = time.perf_counter() - started
    worst = max(errs)
    ok = worst <= 1e-6 and elapsed < 1.0
    assert acceptance("1 closed-form reductions", ok, f"max error {worst:.2e} (tol 1e-6), {elapsed:.2f} s (limit 1 s)")


def test_criterion_2_aggregate_law(acceptance):
    errs = []
    for theta1 in (0.0, 0.4):
        for r, (alpha, beta) in enumerate(TABLE_ROWS):
            agg = aggregate_params(model_for(alpha, beta, theta1))
            errs.append(abs(agg.gamma - GAMMA_REF[theta1][r]))
            errs.append(abs(agg.delta - DELTA_REF[theta1][r]))
    worst = max(errs)
    ok = worst <= 1e-3 + 1e-12
    assert acceptance("2 aggregate-law exactness", ok, f"36 values, max |diff| {worst:.2e} (tol 1e-3)")


@pytest.mark.parametrize("alpha,beta", [(1.2, 0.0), (1.5, 0.5)])
def test_criterion_3_g1_oracle(acceptance, alpha, beta):
    model = model_for(alpha, beta, 0.4)
    xi = np.atleast_1d(stable_quantile(aggregate_params(model), np.array(DEFAULT_LEVELS)))
    g = g1_matrix(model.innovation, 0.4, xi)
    n = 10**7
    rng = make_rng(2027, int(10 * alpha), int(10 * beta))
    # independent triples (eps_t-1, eps_t, eps_t+1) give independent (X_t, X_t+1) pairs
    e0, e1, e2 = (stable_sample(model.innovation, n, rng) for _ in range(3))
    below_t = (e1 + 0.4 * e0)[None, :] <= xi[:, None]
    below_next = (e2 + 0.4 * e1)[None, :] <= xi[:, None]
    mc = (below_t.astype(np.float32) @ below_next.T.astype(np.float32)) / n
    se = np.sqrt(mc * (1 - mc) / n)
    z = np.abs(g - mc) / se
    ok = bool(np.all(z <= 3.0))
    assert acceptance(
        f"3 G1 quadrature vs oracle (alpha={alpha}, beta0={beta})", ok, f"25 pairs, max |z| {z.max():.2f} (tol 3)"
    )


def test_criterion_4_iid_reduction(acceptance):
    worst = 0.0
    for alpha, beta in TABLE_ROWS:
        law = StableParams(alpha, beta, 2.0, 1.0)
        s = sigma_quantiles(SmaModel((1.0,), law)).matrix
        dens = stable_pdf(law, stable_quantile(law, np.array(DEFAULT_LEVELS)))
        worst = max(worst, float(np.max(np.abs(s - sigma_iid(DEFAULT_LEVELS, dens)))))
    ok = worst <= 1e-8
    assert acceptance("4 iid reduction", ok, f"9 laws, max entry diff {worst:.2e} (tol 1e-8)")


def test_criterion_5_asymptotic_variances(acceptance):
    started = time.perf_counter()
    worst, worst_cell, checked = 0.0, None, 0
    flagged, order_ok = [], True
    for r, (alpha, beta) in enumerate(TABLE_ROWS):
        row = {}
        for c, theta1 in enumerate(TABLE_THETAS):
            row[theta1] = analytic_covariance(model_for(alpha, beta, theta1)).variances()
        for name in PARAMS:
            ref = ASYM_REF[name][r]
            if name == "beta" and alpha == 1.8:
                ours = [row[t]["beta"] for t in TABLE_THETAS]
                order_ok &= ours[0] < ours[1] < ours[2]
                gap = max(abs(o / v - 1) for o, v in zip(ours, ref))
                flagged.append(f"beta0={beta}:{gap:+.1%}")
                continue
            for c, theta1 in enumerate(TABLE_THETAS):
                if ref[c] is None:
                    continue
                rel = abs(row[theta1][name] / ref[c] - 1)
                checked += 1
                if rel > worst:
                    worst, worst_cell = rel, (alpha, beta, theta1, name)
    elapsed = time.perf_counter() - started
    ok = worst <= 0.10 and order_ok and elapsed < 600
    detail = (
        f"{checked} cells, max rel err {worst:.2%} at {worst_cell} (tol 10%); "
        f"alpha=1.8 beta cells flagged [{', '.join(flagged)}], theta1 ordering {'ok' if order_ok else 'WRONG'}; "
        f"{elapsed:.0f} s"
    )
    assert acceptance("5 asymptotic-variance reproduction", ok, detail)


def _simulation_check(realisations, nvar_tol, seed=0):
    fails, worst_z, worst_v, checked = [], 0.0, 0.0, 0
    for r, (alpha, beta) in enumerate(TABLE_ROWS):
        for c, theta1 in enumerate(TABLE_THETAS):
            est, _ = run_estimates(model_for(alpha, beta, theta1), realisations, LENGTH, seed, stream=(3 * r + c,))
            mean = est.mean(axis=0)
            n_var = LENGTH * est.var(axis=0, ddof=1)
            for k, name in enumerate(PARAMS):
                ref = SIM_REF[name][r][c]
                if ref is None:
                    continue
                ref_mean, ref_sd, ref_nvar = ref
                z = (mean[k] - ref_mean) / (ref_sd / math.sqrt(realisations))
                v = n_var[k] / ref_nvar - 1
                checked += 1
                worst_z, worst_v = max(worst_z, abs(z)), max(worst_v, abs(v))
                if abs(z) > 3 or abs(v) > nvar_tol:
                    fails.append(f"({alpha},{beta},{theta1},{name}: z={z:+.1f}, nvar {v:+.0%})")
    return fails, worst_z, worst_v, checked


def test_criterion_6_quarter_scale(acceptance):
    started = time.perf_counter()
    fails, wz, wv, checked = _simulation_check(500, 0.25)
    elapsed = time.perf_counter() - started
    ok = not fails and elapsed < 900
    detail = f"{checked} cell-parameters, max |z| {wz:.2f} (tol 3), max n*var gap {wv:.1%} (tol 25%), {elapsed:.0f} s"
    if fails:
        detail += "; failing " + " ".join(fails)
    assert acceptance("6 simulation study, 500 realisations", ok, detail)


def test_criterion_6_full_scale(acceptance):
    fails, wz, wv, checked = _simulation_check(2000, 0.15)
    detail = f"{checked} cell-parameters, max |z| {wz:.2f} (tol 3), max n*var gap {wv:.1%} (tol 15%)"
    if fails:
        detail += "; failing " + " ".join(fails)
    assert acceptance("6 simulation study, 2000 realisations", not fails, detail)


def test_criterion_7_properties(acceptance, tables, tmp_path):
    started = time.perf_counter()
    checks = {}

    q = QuantileSet(DEFAULT_LEVELS, (-4.1, -1.2, 0.1, 1.6, 6.0), "empirical")
    base = estimate_params(q, tables).params
    moved = estimate_params(q.replace_values(3.0 * q.as_array() - 2.0), tables).params
    checks["affine equivariance"] = max(
        abs(moved.alpha - base.alpha),
        abs(moved.beta - base.beta),
        abs(moved.gamma - 3.0 * base.gamma),
        abs(moved.delta - (3.0 * base.delta - 2.0)),
    ) <= 1e-10

    va = np.array(v_stats(q))
    vb = np.array(v_stats(q.replace_values(0.25 * q.as_array() + 7.0)))
    checks["v invariance"] = bool(np.all(np.abs(va - vb) <= 1e-12 * np.abs(va).max()))

    checks["table monotonicity"] = bool(
        np.all(np.diff(tables.phi1, axis=0) < 0) and np.all(np.diff(tables.phi2[tables.alpha_grid < 2], axis=1) > 0)
    )

    psd = True
    for alpha, beta in TABLE_ROWS:
        m = sigma_quantiles(model_for(alpha, beta, 0.4)).matrix
        psd &= bool(np.max(np.abs(m - m.T)) <= 1e-12 and np.linalg.eigvalsh(m).min() >= -1e-8 * m.diagonal().max())
    checks["Sigma symmetric PSD"] = psd

    worst_c = 0.0
    for alpha, beta in TABLE_ROWS:
        pop = population_quantiles(StableParams(alpha, beta, 2.0, 1.0))
        a = numeric_jacobian(pop, 400, tables).entries
        b = numeric_jacobian(pop, 800, tables).entries
        # entries that vanish by symmetry are measured on the scale of their row
        scale = np.maximum(np.abs(a), 1e-3 * np.abs(a).max(axis=1, keepdims=True))
        worst_c = max(worst_c, float(np.max(np.abs(a - b) / scale)))
    checks["Jacobian C to 2C"] = worst_c < 0.05

    mono = True
    for alpha, beta in TABLE_ROWS:
        v = [analytic_covariance(model_for(alpha, beta, t)).variances()["alpha"] for t in TABLE_THETAS]
        mono &= v[0] < v[1] < v[2]
    checks["theta1 monotonicity of Var(alpha)"] = mono

    runs = []
    for name in ("a", "b"):
        out = tmp_path / name
        out.mkdir()
        write_tables(run_tables(realisations=4, length=100, seed=11), out)
        runs.append(b"".join((out / f).read_bytes() for f in sorted(p.name for p in out.iterdir())))
    checks["end-to-end determinism"] = runs[0] == runs[1]

    elapsed = time.perf_counter() - started
    ok = all(checks.values()) and elapsed < 300
    failed = [k for k, v in checks.items() if not v]
    detail = f"{len(checks) - len(failed)}/{len(checks)} properties hold, Jacobian max change {worst_c:.2%}, {elapsed:.0f} s"
    if failed:
        detail += "; failing: " + ", ".join(failed)
    assert acceptance("7 property suite", ok, detail)


def test_criterion_8_consistency(acceptance, tables):
    rng = np.random.default_rng(8)
    points = np.column_stack([rng.uniform(1.1, 1.9, 20), rng.uniform(0.0, 0.7, 20)])
    worst = np.zeros(4)
    for alpha, beta in points:
        gamma, delta = rng.uniform(0.5, 3.0), rng.uniform(-2.0, 2.0)
        truth = np.array([alpha, beta, gamma, delta])
        est = estimate_params(population_quantiles(StableParams(*truth)), tables).params
        worst = np.maximum(worst, np.abs(np.array(est.as_tuple()) - truth))
    ok = bool(np.all(worst <= 1e-3))
    detail = "20 points, max errors " + ", ".join(f"{n} {w:.1e}" for n, w in zip(PARAMS, worst)) + " (tol 1e-3)"
    assert acceptance("8 consistency on population quantiles", ok, detail)
