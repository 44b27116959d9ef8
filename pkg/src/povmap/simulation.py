"""Design-based simulation harness: synthetic fixed populations with
heterogeneous area slopes and error variances, repeated within-area SRS, and
estimator comparison via relative bias, RRMSPE, and efficiency ratios."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .baselines import mr_ebp, mr_fit_ml
from .data import CensusDataset, DataError, SurveyDataset, WelfareTransform, direct_fgt, fgt_unit
from .fit import FitConfig, fit_nerhdp
from .predict import PredictionConfig, ebp_fgt

ESTIMATOR_TAGS = {"cls": 1, "mr": 2, "direct": 3}


@dataclass(frozen=True)
class PopulationSpec:
    m: int = 40
    size_range: tuple = (80, 200)
    p: int = 2
    beta0: float = 7.0
    base_slopes: tuple = None                # defaults to 0.5 per covariate
    slope_heterogeneity: float = 0.5
    error_sd_range: tuple = (0.3, 1.2)
    sigma_gamma: float = 0.2
    poverty_line_factor: float = 0.6
    transform: WelfareTransform = field(default_factory=WelfareTransform)
    seed: int = 0
    # correlation in [0,1) between a per-area index carried in the area-level
    # auxiliary data and the area's effect/slope heterogeneity; 0 keeps the
    # auxiliary data uninformative about the area parameters
    aux_signal: float = 0.0

    def __post_init__(self):
        if self.size_range[0] < 2 or self.error_sd_range[0] <= 0:
            raise DataError("area sizes must be >= 2 and error sds positive")


@dataclass(frozen=True)
class Population:
    census: CensusDataset
    y: np.ndarray
    welfare: np.ndarray
    z: float
    true_fgt: dict                           # area -> alpha -> true value
    area_params: dict                        # area -> (slopes, error sd, gamma)
    spec: PopulationSpec


@dataclass(frozen=True)
class ExperimentConfig:
    R: int = 1000
    fraction: float = 0.1
    out_of_sample_area_ids: tuple = ()
    estimators: tuple = ("cls", "mr", "direct")
    K: int = 100
    alphas: tuple = (0, 1, 2)
    seed: int = 0
    baseline: str = "direct"
    fit: FitConfig = field(default_factory=FitConfig)
    eval_area_ids: tuple = None              # None evaluates every area

    def __post_init__(self):
        if self.R < 1 or not 0.0 < self.fraction <= 1.0:
            raise DataError("R must be >= 1 and fraction in (0, 1]")
        unknown = set(self.estimators) - set(ESTIMATOR_TAGS)
        if unknown:
            raise DataError(f"unknown estimators {sorted(unknown)}")


@dataclass(frozen=True)
class MetricsReport:
    per_area: pd.DataFrame                   # estimator, area_id, alpha, rb, rrmspe
    summary: pd.DataFrame                    # estimator, alpha, rb, rrmspe, eff
    baseline: str
    replicates: dict                         # estimator -> usable replicate count
    excluded_areas: list


def generate_population(spec: PopulationSpec) -> Population:
    """One fixed synthetic population with per-area slopes, error sds, and
    area effects drawn once; the poverty line follows the configured rule."""
    rng = np.random.default_rng(spec.seed)
    base = np.full(spec.p, 0.5) if spec.base_slopes is None else np.asarray(spec.base_slopes, float)
    if base.shape != (spec.p,):
        raise DataError("base_slopes length must equal p")

    sizes = rng.integers(spec.size_range[0], spec.size_range[1] + 1, spec.m)
    labels = [f"area_{i:03d}" for i in range(spec.m)]
    rho = spec.aux_signal
    if not 0.0 <= rho < 1.0:
        raise DataError("aux_signal must lie in [0, 1)")
    index = rng.standard_normal(spec.m)          # per-area heterogeneity index
    mix = rho * index[:, None] + np.sqrt(1.0 - rho**2) * rng.standard_normal(
        (spec.m, spec.p)
    )
    slopes = base + spec.slope_heterogeneity * mix
    sds = rng.uniform(spec.error_sd_range[0], spec.error_sd_range[1], spec.m)
    gammas = spec.sigma_gamma * (
        rho * index + np.sqrt(1.0 - rho**2) * rng.standard_normal(spec.m)
    )

    total = int(sizes.sum())
    X = rng.standard_normal((total, spec.p))
    area_ids = np.repeat(labels, sizes)
    y = np.empty(total)
    start = 0
    for i, n in enumerate(sizes):
        rows = slice(start, start + n)
        y[rows] = spec.beta0 + X[rows] @ slopes[i] + gammas[i] + rng.normal(0, sds[i], n)
        start += n
    welfare = spec.transform.inverse(y)
    z = spec.poverty_line_factor * float(np.median(welfare))

    area_aux = {}
    true_fgt = {}
    idx = {a: np.flatnonzero(area_ids == a) for a in labels}
    for i, a in enumerate(labels):
        rows = idx[a]
        aux = [1.0] + list(X[rows].mean(axis=0))
        if rho > 0:
            aux.append(index[i])                 # observable area-level signal
        area_aux[a] = np.asarray(aux)
        true_fgt[a] = {alpha: float(np.mean(fgt_unit(welfare[rows], z, alpha))) for alpha in (0, 1, 2)}

    census = CensusDataset(area_ids=area_ids, X=X, area_aux=area_aux)
    area_params = {labels[i]: (slopes[i], float(sds[i]), float(gammas[i])) for i in range(spec.m)}
    return Population(
        census=census, y=y, welfare=welfare, z=z,
        true_fgt=true_fgt, area_params=area_params, spec=spec,
    )


def srs_draw(population: Population, fraction: float, out_of_sample_ids=(), seed=0) -> SurveyDataset:
    """Within-area SRS without replacement; weights N_i/n_i; excluded areas
    contribute no records."""
    census = population.census
    rng = np.random.default_rng(seed)
    rows_all = []
    for a in census.areas:
        if a in out_of_sample_ids:
            continue
        rows = census.area_rows(a)
        n_i = max(1, int(round(fraction * rows.size)))
        rows_all.append((rng.choice(rows, size=n_i, replace=False), rows.size))
    picked = np.concatenate([r for r, _ in rows_all])
    weights = np.concatenate([np.full(r.size, n / r.size) for r, n in rows_all])
    return SurveyDataset(
        area_ids=census.area_ids[picked],
        y=population.y[picked],
        welfare=population.welfare[picked],
        X=census.X[picked],
        weights=weights,
    )


def compute_metrics(raw: pd.DataFrame, truth: dict, baseline: str, eval_area_ids=None) -> MetricsReport:
    """Per-area and averaged RB / RRMSPE, plus efficiency vs the baseline."""
    df = raw.copy()
    if eval_area_ids is not None:
        df = df[df["area_id"].isin(set(eval_area_ids))]
    excluded = sorted(
        {a for a in df["area_id"].unique() for al in truth[a] if truth[a][al] <= 0}
    )
    records = []
    for (est, a, alpha), grp in df.groupby(["estimator", "area_id", "alpha"]):
        t = truth[a][alpha]
        if t <= 0:
            continue
        err = grp["estimate"].to_numpy() - t
        records.append(
            {
                "estimator": est, "area_id": a, "alpha": alpha,
                "rb": float(err.mean() / t),
                "rrmspe": float(np.sqrt(np.mean(err**2)) / t),
            }
        )
    per_area = pd.DataFrame.from_records(records)
    summary = (
        per_area.groupby(["estimator", "alpha"])[["rb", "rrmspe"]].mean().reset_index()
    )
    base = summary[summary["estimator"] == baseline].set_index("alpha")["rrmspe"]

    def _eff(row):
        if row["estimator"] == baseline:
            return 1.0
        if row["alpha"] not in base.index:
            return np.nan
        return row["rrmspe"] / base[row["alpha"]]

    summary["eff"] = [_eff(row) for _, row in summary.iterrows()]
    reps = {
        est: int(df[df["estimator"] == est]["replicate"].nunique())
        for est in df["estimator"].unique()
    }
    return MetricsReport(
        per_area=per_area, summary=summary, baseline=baseline,
        replicates=reps, excluded_areas=excluded,
    )


def _estimator_seed(seed: int, replicate: int, estimator: str) -> int:
    ss = np.random.SeedSequence((seed, replicate, ESTIMATOR_TAGS[estimator]))
    return int(ss.generate_state(1)[0])


def _run_one(population: Population, survey: SurveyDataset, config: ExperimentConfig, r: int):
    census = population.census
    rows = []
    failures = []
    for est in config.estimators:
        try:
            if est == "direct":
                for a in survey.areas:
                    w_rows = survey.area_rows(a)
                    for alpha in config.alphas:
                        val, _, _ = direct_fgt(
                            survey.welfare[w_rows], survey.weights[w_rows], population.z, alpha
                        )
                        rows.append((r, est, a, alpha, val))
                continue
            pred = PredictionConfig(
                z=population.z, K=config.K, alphas=config.alphas,
                transform=population.spec.transform,
                seed=_estimator_seed(config.seed, r, est),
            )
            if est == "cls":
                params, _ = fit_nerhdp(survey, census, config.fit)
                out = ebp_fgt(census, params, pred)
            else:
                ner = mr_fit_ml(survey)
                out = mr_ebp(census, ner, survey, pred)
            for a in census.areas:
                for alpha in config.alphas:
                    rows.append((r, est, a, alpha, out[a][alpha].value))
        except Exception as exc:
            failures.append((r, est, repr(exc)))
    return rows, failures


def run_experiment(population: Population, config: ExperimentConfig):
    """Repeatedly sample the fixed population and run every configured
    estimator; returns (MetricsReport, raw estimates DataFrame, failures)."""
    rows = []
    failures = []
    for r in range(config.R):
        sample_seed = int(np.random.SeedSequence((config.seed, r)).generate_state(1)[0])
        survey = srs_draw(population, config.fraction, config.out_of_sample_area_ids, sample_seed)
        got, bad = _run_one(population, survey, config, r)
        rows.extend(got)
        failures.extend(bad)
    raw = pd.DataFrame(rows, columns=["replicate", "estimator", "area_id", "alpha", "estimate"])
    report = compute_metrics(raw, population.true_fgt, config.baseline, config.eval_area_ids)
    return report, raw, failures
