"""End-to-end model fit: tuning parameters, per-area robust regressions,
variance components, and the per-area parameter bundles used for prediction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import CensusDataset, DataError, SurveyDataset
from .robust import DEFAULT_HUBER_C, mquantile_regress
from .tuning import TauEstimates, estimate_taus, fit_grid
from .varcomp import iterate_variances


@dataclass(frozen=True)
class FitConfig:
    grid: object = None              # ascending tau grid, None for the default
    huber_c: float = DEFAULT_HUBER_C
    var_tol: float = 1e-6
    max_outer: int = 50
    single_pass: bool = False
    fixed_taus: dict = None          # area_id -> tau, skips tuning when given


@dataclass(frozen=True)
class AreaParams:
    """Fitted parameters for one area; shrinkage and resid_mean are None for
    areas without sample."""

    area_id: object
    beta0: float
    slopes: np.ndarray
    sigma_gamma2: float
    sigma_eps2: float
    tau: float
    n_i: int
    shrinkage: float = None
    resid_mean: float = None


@dataclass(frozen=True)
class FitReport:
    tau_source: dict
    step1_converged: dict
    step1_iterations: dict
    grid_converged: np.ndarray
    variance_iterations: int
    variance_converged: bool
    flags: dict = field(default_factory=dict)


def shrinkage_factor(sigma_gamma2: float, sigma_eps2: float, n_i: int) -> float:
    """B_i = sigma_gamma^2 / (sigma_gamma^2 + sigma_eps^2 / n_i)."""
    if n_i < 1:
        raise DataError("shrinkage requires n_i >= 1")
    if sigma_gamma2 < 0 or sigma_eps2 < 0:
        raise DataError("variances must be non-negative")
    denom = sigma_gamma2 + sigma_eps2 / n_i
    if denom == 0.0:
        return 0.0
    return float(sigma_gamma2 / denom)


def _check_schema(survey: SurveyDataset, census: CensusDataset):
    if survey.p != census.p:
        raise DataError(
            f"covariate count mismatch: survey p={survey.p}, census p={census.p}"
        )
    missing = [a for a in survey.areas if a not in census.area_index]
    if missing:
        raise DataError(f"survey areas missing from census: {missing}")


def fit_nerhdp(survey: SurveyDataset, census: CensusDataset, config: FitConfig = None):
    """Fit the area-specific nested error model; returns (params, report) with
    one AreaParams per census area."""
    config = config or FitConfig()
    _check_schema(survey, census)
    c = config.huber_c
    areas = census.areas

    if config.fixed_taus is not None:
        missing = [a for a in areas if a not in config.fixed_taus]
        if missing:
            raise DataError(f"fixed_taus missing areas {missing}")
        taus = TauEstimates(
            unit_tau={}, area_tau=dict(config.fixed_taus), delta={}, eta=None,
            source={a: "fixed" for a in areas},
        )
        grid_converged = np.array([], dtype=bool)
    else:
        grid = fit_grid(survey, config.grid, c)
        taus = estimate_taus(survey, grid, areas, census.area_aux)
        grid_converged = grid.converged

    # step 1: one pooled asymmetric fit per distinct tau value
    X1 = np.column_stack([np.ones(survey.n), survey.X])
    cache: dict = {}
    step1 = {}
    for a in areas:
        key = round(taus.area_tau[a], 12)
        if key not in cache:
            cache[key] = mquantile_regress(X1, survey.y, taus.area_tau[a], c)
        step1[a] = cache[key]

    sampled_rows = [survey.area_rows(a) for a in survey.areas]
    blocks = {}
    scale2 = {}
    for a in areas:
        fit = step1[a]
        resid = (survey.y - fit.intercept - survey.X @ fit.slopes) / fit.scale
        blocks[a] = [resid[rows] for rows in sampled_rows]
        scale2[a] = fit.scale**2

    slopes = {a: step1[a].slopes for a in areas}
    solution = iterate_variances(
        blocks, scale2, survey, slopes, taus.area_tau, c,
        tol=config.var_tol, max_outer=config.max_outer, single_pass=config.single_pass,
    )

    params = {}
    for a in areas:
        n_i = len(survey.area_index.get(a, ()))
        shrink = None
        rbar = None
        if n_i >= 1:
            rows = survey.area_rows(a)
            rbar = float(
                np.mean(survey.y[rows] - solution.beta0 - survey.X[rows] @ slopes[a])
            )
            shrink = shrinkage_factor(solution.sigma_gamma2, solution.sigma_eps2[a], n_i)
        params[a] = AreaParams(
            area_id=a,
            beta0=solution.beta0,
            slopes=slopes[a],
            sigma_gamma2=solution.sigma_gamma2,
            sigma_eps2=solution.sigma_eps2[a],
            tau=taus.area_tau[a],
            n_i=n_i,
            shrinkage=shrink,
            resid_mean=rbar,
        )

    flags = dict(taus.flags)
    flags.update(solution.flags)
    for a in survey.areas:
        if len(survey.area_rows(a)) < 3:
            flags.setdefault(a, "area sample size below 3")
    report = FitReport(
        tau_source=taus.source,
        step1_converged={a: step1[a].converged for a in areas},
        step1_iterations={a: step1[a].iterations for a in areas},
        grid_converged=grid_converged,
        variance_iterations=solution.iterations,
        variance_converged=solution.converged,
        flags=flags,
    )
    return params, report
