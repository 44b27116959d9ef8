"""Baseline estimator: the classical homogeneous nested error regression EBP
fitted by maximum likelihood (profile likelihood over the two variances)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .data import CensusDataset, DataError, SurveyDataset
from .fit import AreaParams, shrinkage_factor
from .predict import PredictionConfig, ebp_fgt
from .varcomp import VARIANCE_FLOOR


@dataclass(frozen=True)
class NerParams:
    """Common coefficients (intercept first), shared variances, and the
    maximized Gaussian log-likelihood."""

    beta: np.ndarray
    sigma_gamma2: float
    sigma_eps2: float
    loglik: float
    converged: bool = True


def _grouped(survey: SurveyDataset):
    X1 = np.column_stack([np.ones(survey.n), survey.X])
    groups = []
    for a in survey.areas:
        rows = survey.area_rows(a)
        groups.append((X1[rows], survey.y[rows]))
    return X1, groups


def _gls_beta(groups, sg2: float, se2: float):
    """Closed-form GLS coefficients under compound symmetry, plus loglik pieces."""
    k = groups[0][0].shape[1]
    A = np.zeros((k, k))
    bvec = np.zeros(k)
    for Xg, yg in groups:
        n = len(yg)
        lam = sg2 / (se2 + n * sg2)
        xs = Xg.sum(axis=0)
        ys = yg.sum()
        A += (Xg.T @ Xg - lam * np.outer(xs, xs)) / se2
        bvec += (Xg.T @ yg - lam * xs * ys) / se2
    beta = np.linalg.solve(A, bvec)
    return beta


def _profile_loglik(groups, sg2: float, se2: float):
    beta = _gls_beta(groups, sg2, se2)
    ll = 0.0
    ntot = 0
    for Xg, yg in groups:
        n = len(yg)
        r = yg - Xg @ beta
        lam = sg2 / (se2 + n * sg2)
        quad = (r @ r - lam * r.sum() ** 2) / se2
        logdet = (n - 1) * math.log(se2) + math.log(se2 + n * sg2)
        ll += -0.5 * (logdet + quad)
        ntot += n
    ll += -0.5 * ntot * math.log(2.0 * math.pi)
    return ll, beta


def mr_fit_ml(survey: SurveyDataset) -> NerParams:
    """ML fit of the homogeneous nested error model via Nelder-Mead on the
    log-parameterized variance profile."""
    if len(survey.areas) < 2:
        raise DataError("MR fit needs at least 2 areas")
    X1, groups = _grouped(survey)
    if survey.n <= X1.shape[1]:
        raise DataError("sample too small for the design")

    # moment starting values
    beta0, *_ = np.linalg.lstsq(X1, survey.y, rcond=None)
    resid = survey.y - X1 @ beta0
    se2_0 = max(float(np.var(resid)), 1e-6)
    means = np.array([resid[survey.area_rows(a)].mean() for a in survey.areas])
    sg2_0 = max(float(np.var(means)) - se2_0 / max(survey.n / len(means), 1.0), 1e-4)

    def neg(theta):
        sg2 = math.exp(theta[0])
        se2 = math.exp(theta[1])
        try:
            ll, _ = _profile_loglik(groups, sg2, se2)
        except np.linalg.LinAlgError:
            return 1e12
        return -ll

    res = minimize(
        neg, np.log([sg2_0, se2_0]), method="Nelder-Mead",
        options={"maxiter": 2000, "xatol": 1e-10, "fatol": 1e-10},
    )
    sg2 = math.exp(res.x[0])
    se2 = math.exp(res.x[1])

    # compare with the sigma_gamma^2 -> 0 boundary profile
    res0 = minimize(
        lambda t: neg([math.log(VARIANCE_FLOOR), t[0]]), [math.log(se2_0)],
        method="Nelder-Mead", options={"maxiter": 1000, "xatol": 1e-10, "fatol": 1e-10},
    )
    if -res0.fun > -res.fun:
        sg2, se2 = VARIANCE_FLOOR, math.exp(res0.x[0])
    ll, beta = _profile_loglik(groups, sg2, se2)
    return NerParams(
        beta=np.asarray(beta, dtype=float),
        sigma_gamma2=float(sg2),
        sigma_eps2=float(max(se2, VARIANCE_FLOOR)),
        loglik=float(ll),
        converged=bool(res.success),
    )


def ner_area_params(survey: SurveyDataset, census: CensusDataset, ner: NerParams) -> dict:
    """Broadcast the homogeneous fit into per-area parameter bundles so the
    EBP kernel can be reused unchanged."""
    beta0 = float(ner.beta[0])
    slopes = np.asarray(ner.beta[1:], dtype=float)
    params = {}
    for a in census.areas:
        rows = survey.area_index.get(a)
        n_i = 0 if rows is None else len(rows)
        shrink = None
        rbar = None
        if n_i >= 1:
            rbar = float(np.mean(survey.y[rows] - beta0 - survey.X[rows] @ slopes))
            shrink = shrinkage_factor(ner.sigma_gamma2, ner.sigma_eps2, n_i)
        params[a] = AreaParams(
            area_id=a,
            beta0=beta0,
            slopes=slopes,
            sigma_gamma2=ner.sigma_gamma2,
            sigma_eps2=ner.sigma_eps2,
            tau=0.5,
            n_i=n_i,
            shrinkage=shrink,
            resid_mean=rbar,
        )
    return params


def mr_ebp(
    census: CensusDataset,
    ner: NerParams,
    survey: SurveyDataset,
    config: PredictionConfig,
) -> dict:
    """EBP of the FGT measures under the homogeneous model; identical Monte
    Carlo kernel and seeding as the area-specific predictor."""
    return ebp_fgt(census, ner_area_params(survey, census, ner), config)
