"""Parametric bootstrap estimator of MSPE and CV for the EBP FGT estimates.

Each replicate draws a bootstrap population from the fitted model, computes
its true FGT values, builds a bootstrap sample on the original covariate rows
(reusing the population's area effects for sampled areas, with fresh unit
errors), refits the model, and squares the prediction errors.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import CensusDataset, DataError, SurveyDataset
from .fit import FitConfig, fit_nerhdp
from .predict import PredictionConfig, _h_alpha, ebp_fgt, sd_from_variance


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 100
    seed: int = 0
    refit_tau: bool = True
    threads: int = 1
    max_failure_fraction: float = 0.2

    def __post_init__(self):
        if self.B < 1:
            raise DataError("B must be >= 1")


def _draw_population(census: CensusDataset, fitted: dict, rng) -> tuple:
    """Bootstrap population responses and the per-area effects used to build it."""
    areas = census.areas
    u = {a: rng.normal(0.0, sd_from_variance(fitted[a].sigma_gamma2)) for a in areas}
    y = np.empty(len(census.area_ids))
    for a in areas:
        pa = fitted[a]
        rows = census.area_rows(a)
        sd_e = sd_from_variance(pa.sigma_eps2)
        e = rng.normal(0.0, sd_e, rows.size) if sd_e > 0 else 0.0
        y[rows] = pa.beta0 + census.X[rows] @ pa.slopes + u[a] + e
    return y, u


def _draw_sample(survey: SurveyDataset, fitted: dict, u: dict, transform, rng) -> SurveyDataset:
    """Bootstrap sample on the original covariate rows; reuses the population
    area effects, draws unit errors independently."""
    y = np.empty(survey.n)
    for a in survey.areas:
        pa = fitted[a]
        rows = survey.area_rows(a)
        sd_e = sd_from_variance(pa.sigma_eps2)
        e = rng.normal(0.0, sd_e, rows.size) if sd_e > 0 else 0.0
        y[rows] = pa.beta0 + survey.X[rows] @ pa.slopes + u[a] + e
    return SurveyDataset(
        area_ids=survey.area_ids,
        y=y,
        welfare=transform.inverse(y),
        X=survey.X,
        weights=survey.weights,
    )


def _replicate(b, survey, census, fitted, boot, pred_config, fit_config):
    rng_pop = np.random.default_rng((boot.seed, b, 0))
    y_pop, u = _draw_population(census, fitted, rng_pop)
    welfare_pop = pred_config.transform.inverse(y_pop)
    truth = {
        a: {
            alpha: float(np.mean(_h_alpha(welfare_pop[census.area_rows(a)], pred_config.z, alpha)))
            for alpha in pred_config.alphas
        }
        for a in census.areas
    }

    rng_smp = np.random.default_rng((boot.seed, b, 1))
    bs_survey = _draw_sample(survey, fitted, u, pred_config.transform, rng_smp)

    if boot.refit_tau:
        bs_fit_config = fit_config
    else:
        bs_fit_config = FitConfig(
            grid=fit_config.grid,
            huber_c=fit_config.huber_c,
            var_tol=fit_config.var_tol,
            max_outer=fit_config.max_outer,
            single_pass=fit_config.single_pass,
            fixed_taus={a: fitted[a].tau for a in census.areas},
        )
    bs_params, _ = fit_nerhdp(bs_survey, census, bs_fit_config)

    inner_seed = int(np.random.SeedSequence((boot.seed, b, 2)).generate_state(1)[0])
    inner = PredictionConfig(
        z=pred_config.z, K=pred_config.K, alphas=pred_config.alphas,
        transform=pred_config.transform, seed=inner_seed, threads=1,
    )
    est = ebp_fgt(census, bs_params, inner)
    return {
        a: {alpha: (est[a][alpha].value - truth[a][alpha]) ** 2 for alpha in pred_config.alphas}
        for a in census.areas
    }


def bootstrap_mspe(
    survey: SurveyDataset,
    census: CensusDataset,
    fitted: dict,
    boot: BootstrapConfig,
    pred_config: PredictionConfig,
    fit_config: FitConfig = None,
    point_estimates: dict = None,
):
    """Bootstrap MSPE and CV per area and alpha.

    Returns (results, diagnostics) where results maps area -> alpha ->
    (mspe, cv); cv uses the original point estimate as denominator and is
    None when that estimate is zero.
    """
    fit_config = fit_config or FitConfig()
    if point_estimates is None:
        point_estimates = ebp_fgt(census, fitted, pred_config)

    def run(b):
        try:
            return b, _replicate(b, survey, census, fitted, boot, pred_config, fit_config)
        except Exception as exc:  # refit failures are excluded, not fatal
            return b, exc

    if boot.threads > 1:
        with ThreadPoolExecutor(max_workers=boot.threads) as pool:
            outcomes = list(pool.map(run, range(boot.B)))
    else:
        outcomes = [run(b) for b in range(boot.B)]
    outcomes.sort(key=lambda t: t[0])

    failures = {b: repr(r) for b, r in outcomes if isinstance(r, Exception)}
    good = [(b, r) for b, r in outcomes if not isinstance(r, Exception)]
    if len(failures) > boot.max_failure_fraction * boot.B:
        raise DataError(
            f"{len(failures)} of {boot.B} bootstrap replicates failed: {failures}"
        )
    if not good:
        raise DataError("all bootstrap replicates failed")

    results = {}
    for a in census.areas:
        results[a] = {}
        for alpha in pred_config.alphas:
            mspe = sum(r[a][alpha] for _, r in good) / len(good)
            point = point_estimates[a][alpha].value
            cv = math.sqrt(mspe) / point if point > 0 else None
            results[a][alpha] = (mspe, cv)
    diagnostics = {
        "replicates": boot.B,
        "successes": len(good),
        "failures": failures,
        "seed": boot.seed,
        "refit_tau": boot.refit_tau,
    }
    return results, diagnostics
