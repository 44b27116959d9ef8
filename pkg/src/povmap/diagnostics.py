"""Diagnostics comparing model-based and direct estimates: the goodness-of-fit
W statistic, CV empirical distribution functions, and their correlation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .data import DataError

CV_THRESHOLDS = (16.6, 20.0, 33.3)


@dataclass(frozen=True)
class WStatistic:
    value: float
    df: int
    chi2_95: float
    excluded_areas: list

    @property
    def coherent(self) -> bool:
        return self.value < self.chi2_95


def w_statistic(direct_values, direct_variances, model_values, model_mspes, area_ids=None):
    """Sum of squared direct-vs-model differences scaled by combined
    uncertainty, with its 95% chi-square reference quantile.

    Areas with zero combined uncertainty are excluded and the degrees of
    freedom adjusted.
    """
    dv = np.asarray(direct_values, dtype=float)
    dvar = np.asarray(direct_variances, dtype=float)
    mv = np.asarray(model_values, dtype=float)
    mm = np.asarray(model_mspes, dtype=float)
    if not dv.shape == dvar.shape == mv.shape == mm.shape:
        raise DataError("w_statistic inputs must have matching shapes")
    if dv.size == 0:
        raise DataError("w_statistic requires at least one area")
    ids = np.arange(dv.size) if area_ids is None else np.asarray(area_ids)
    denom = dvar + mm
    keep = denom > 0
    excluded = ids[~keep].tolist()
    if not np.any(keep):
        raise DataError("no areas with positive combined uncertainty")
    w = float(np.sum((dv[keep] - mv[keep]) ** 2 / denom[keep]))
    df = int(np.count_nonzero(keep))
    return WStatistic(value=w, df=df, chi2_95=float(chi2.ppf(0.95, df)), excluded_areas=excluded)


def cv_ecdf(cvs, thresholds=CV_THRESHOLDS):
    """Step-function table of the empirical CDF of per-area CV values plus the
    fraction exceeding each reliability threshold.

    Returns (table, exceedance) where table is a list of (cv, fraction <= cv).
    """
    vals = np.asarray(cvs, dtype=float)
    if vals.size == 0:
        raise DataError("cv_ecdf requires at least one CV value")
    if not np.all(np.isfinite(vals)):
        raise DataError("cv_ecdf requires finite CV values")
    srt = np.sort(vals)
    uniq = np.unique(srt)
    table = [(float(u), float(np.searchsorted(srt, u, side="right") / srt.size)) for u in uniq]
    exceedance = {float(t): float(np.mean(vals > t)) for t in thresholds}
    return table, exceedance


def direct_model_correlation(direct_values, model_values) -> float:
    """Pearson correlation between direct and model estimates over sampled areas."""
    dv = np.asarray(direct_values, dtype=float)
    mv = np.asarray(model_values, dtype=float)
    if dv.size != mv.size or dv.size < 2:
        raise DataError("correlation needs >= 2 paired values")
    return float(np.corrcoef(dv, mv)[0, 1])
