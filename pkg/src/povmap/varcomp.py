"""Variance components: area-specific error variances, the shared intercept,
the area-effect variance, and the outer fixed point tying them together."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .data import DataError, SurveyDataset
from .robust import asymmetric_psi, huber_psi, w_star

VARIANCE_FLOOR = 1e-10
ROOT_TOL = 1e-12


@dataclass(frozen=True)
class VarianceSolution:
    """Fitted variance components and the shared intercept."""

    sigma_eps2: dict            # area_id -> error variance (response scale)
    sigma_gamma2: float
    beta0: float
    iterations: int
    converged: bool
    flags: dict = field(default_factory=dict)   # area_id -> solver notes


def _block_stats(blocks, tau: float, c: float):
    """Per-block (n, sum psi, sum psi^2); psi does not depend on the variances."""
    stats = []
    for r in blocks:
        r = np.asarray(r, dtype=float)
        if r.size == 0:
            raise DataError("empty residual block")
        p = asymmetric_psi(r, tau, c)
        stats.append((r.size, float(np.sum(p)), float(np.sum(p * p))))
    return stats


def psi_sq_expectation(tau: float, c: float) -> float:
    """E[psi_tau^2(u)] for u ~ N(0,1): the consistency factor scaling the
    trace term of the error-variance estimating equation."""
    return 2.0 * (tau**2 + (1.0 - tau) ** 2) * w_star(c)


def _eps_equation(se2: float, sg2: float, stats, wfac: float) -> float:
    total = 0.0
    for n, s, ss in stats:
        a = 1.0 / se2
        b = sg2 / (se2 * (se2 + n * sg2))
        total += a * a * ss - (2.0 * a * b - b * b * n) * s * s - wfac * n * (a - b)
    return total


def solve_sigma_eps(residual_blocks, sigma_gamma2: float, tau_i: float, c: float):
    """Root in sigma_eps^2 of the per-area quadratic-form estimating equation.

    residual_blocks are the standardized step-1 residual vectors, one per
    sampled area; the returned root is on the standardized scale.
    """
    value, _ = _solve_sigma_eps_impl(residual_blocks, sigma_gamma2, tau_i, c)
    return value


def _solve_sigma_eps_impl(residual_blocks, sigma_gamma2, tau_i, c):
    if sigma_gamma2 < 0:
        raise DataError("sigma_gamma2 must be non-negative")
    stats = _block_stats(residual_blocks, tau_i, c)
    pooled_ms = sum(ss for _, _, ss in stats) / sum(n for n, _, _ in stats)
    if pooled_ms <= VARIANCE_FLOOR:
        return VARIANCE_FLOOR, True

    wfac = psi_sq_expectation(tau_i, c)
    f = lambda s: _eps_equation(s, sigma_gamma2, stats, wfac)
    lo = VARIANCE_FLOOR
    if f(lo) < 0:
        return lo, True
    hi = max(pooled_ms, 10.0 * VARIANCE_FLOOR)
    cap = 1e6 * pooled_ms
    while f(hi) > 0 and hi < cap:
        hi *= 4.0
    if f(hi) > 0:
        # no sign change even at the cap: report the boundary closer to a root
        return (hi, False) if abs(f(hi)) < abs(f(lo)) else (lo, False)
    root = brentq(f, lo, hi, xtol=ROOT_TOL, rtol=8.881784197001252e-16)
    return float(root), True


def estimate_beta0(survey: SurveyDataset, slopes: dict) -> float:
    """Grand mean of the slope-only residuals y - x'beta_i over all sampled units."""
    total = 0.0
    for area in survey.areas:
        if area not in slopes:
            raise DataError(f"missing slopes for sampled area {area!r}")
        rows = survey.area_rows(area)
        total += float(np.sum(survey.y[rows] - survey.X[rows] @ slopes[area]))
    return total / survey.n


def _gamma_equation(sg2: float, rbar: np.ndarray, d: np.ndarray, c: float, wst: float) -> float:
    v = sg2 + d
    z = rbar / np.sqrt(v)
    return float(np.sum((huber_psi(z, c) ** 2 - wst) / v))


def solve_sigma_gamma(area_residual_means, d, c: float):
    """Non-negative root in sigma_gamma^2 of the between-area estimating equation."""
    rbar = np.asarray(area_residual_means, dtype=float)
    d = np.asarray(d, dtype=float)
    if not (np.all(np.isfinite(rbar)) and np.all(np.isfinite(d))):
        raise DataError("non-finite inputs to solve_sigma_gamma")
    if np.any(d <= 0):
        raise DataError("all d_i must be positive")
    wst = w_star(c)
    f = lambda s: _gamma_equation(s, rbar, d, c, wst)
    if f(0.0) <= 0:
        return 0.0
    hi = max(float(np.max(rbar**2)), float(np.max(d)), 1e-8)
    while f(hi) > 0 and hi < 1e12:
        hi *= 4.0
    if f(hi) > 0:
        return float(hi)
    return float(brentq(f, 0.0, hi, xtol=ROOT_TOL, rtol=8.881784197001252e-16))


def iterate_variances(
    step1_blocks: dict,
    step1_scale2: dict,
    survey: SurveyDataset,
    slopes: dict,
    taus: dict,
    c: float,
    tol: float = 1e-6,
    max_outer: int = 50,
    single_pass: bool = False,
) -> VarianceSolution:
    """Alternate the error-variance solves and the (beta0, sigma_gamma^2) solve
    to a fixed point.

    step1_blocks[i] holds area i's standardized residual vectors (one per
    sampled area); step1_scale2[i] is the squared step-1 scale used to map the
    standardized error-variance root back to the response scale.
    """
    areas = sorted(step1_blocks)
    flags: dict = {}

    # beta0 and the per-area residual means depend only on the step-1 slopes
    beta0 = estimate_beta0(survey, slopes)
    sampled = survey.areas
    rbar = np.array(
        [
            float(np.mean(survey.y[survey.area_rows(a)] - survey.X[survey.area_rows(a)] @ slopes[a]))
            - beta0
            for a in sampled
        ]
    )
    n_i = np.array([len(survey.area_rows(a)) for a in sampled], dtype=float)

    sg2 = 0.0
    eps = {a: np.nan for a in areas}
    converged = False
    it = 0
    max_outer = 1 if single_pass else max_outer
    for it in range(1, max_outer + 1):
        new_eps = {}
        for a in areas:
            q2 = step1_scale2[a]
            root, ok = _solve_sigma_eps_impl(step1_blocks[a], sg2 / q2, taus[a], c)
            if not ok:
                flags[a] = "sigma_eps bracket failure"
            new_eps[a] = max(root * q2, VARIANCE_FLOOR)
        d = np.array([new_eps[a] for a in sampled]) / n_i
        new_sg2 = solve_sigma_gamma(rbar, d, c)

        prev = np.array([sg2] + [eps[a] for a in areas])
        cur = np.array([new_sg2] + [new_eps[a] for a in areas])
        sg2, eps = new_sg2, new_eps
        if np.all(np.isfinite(prev)):
            rel = np.max(np.abs(cur - prev) / np.maximum(np.abs(prev), 1e-8))
            if rel < tol:
                converged = True
                break
    if single_pass:
        converged = True

    return VarianceSolution(
        sigma_eps2=eps,
        sigma_gamma2=sg2,
        beta0=beta0,
        iterations=it,
        converged=converged,
        flags=flags,
    )
