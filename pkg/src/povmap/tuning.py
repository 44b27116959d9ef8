"""Area-specific tuning parameters: the grid of pooled M-quantile fits,
unit-level assignment, area averaging, the smoothed assignment variances,
and the area-level logit model for out-of-sample areas."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .data import DataError, SurveyDataset
from .robust import DEFAULT_HUBER_C, mquantile_regress


def default_grid(step: float = 0.01, lo: float = 0.01, hi: float = 0.99) -> np.ndarray:
    return np.round(np.arange(lo, hi + step / 2, step), 10)


@dataclass(frozen=True)
class TauGrid:
    """Pooled fits (intercept + slopes) for each tau on an ascending grid."""

    taus: np.ndarray                 # ascending, in (0,1)
    coefs: np.ndarray                # shape (len(taus), p+1)
    converged: np.ndarray            # per-grid-point solver flag

    def __post_init__(self):
        t = np.asarray(self.taus, dtype=float)
        if t.size == 0 or np.any(np.diff(t) <= 0) or np.any((t <= 0) | (t >= 1)):
            raise DataError("grid must be strictly ascending inside (0, 1)")
        if len(self.coefs) != t.size:
            raise DataError("one coefficient row per grid point required")

    @property
    def lo(self) -> float:
        return float(self.taus[0])

    @property
    def hi(self) -> float:
        return float(self.taus[-1])

    def fitted(self, X1: np.ndarray) -> np.ndarray:
        """Fitted values for each grid tau; X1 includes the intercept column."""
        return X1 @ self.coefs.T


@dataclass(frozen=True)
class TauEstimates:
    """Per-unit and per-area tuning parameters plus the out-of-sample model."""

    unit_tau: dict                   # (area_id, local unit pos) -> tau
    area_tau: dict                   # area_id -> tau
    delta: dict                      # sampled area_id -> smoothed variance
    eta: np.ndarray                  # logit-model coefficients (or None)
    source: dict                     # area_id -> 'sampled-mean' | 'oos-logit'
    eta_converged: bool = True
    flags: dict = field(default_factory=dict)


def fit_grid(survey: SurveyDataset, grid=None, c: float = DEFAULT_HUBER_C) -> TauGrid:
    """One pooled M-quantile fit per grid point, warm-started along the grid."""
    taus = default_grid() if grid is None else np.asarray(grid, dtype=float)
    X1 = np.column_stack([np.ones(survey.n), survey.X])
    coefs = np.empty((taus.size, X1.shape[1]))
    converged = np.empty(taus.size, dtype=bool)
    start = None
    for k, tau in enumerate(taus):
        fit = mquantile_regress(X1, survey.y, float(tau), c, start=start)
        coefs[k] = fit.coef
        converged[k] = fit.converged
        start = fit.coef
    return TauGrid(taus=taus, coefs=coefs, converged=converged)


def assign_unit_tau(y: float, x: np.ndarray, grid: TauGrid) -> float:
    """Grid tau whose fitted line is closest to y at x; ties break toward the
    tau nearest 0.5, then the smaller tau."""
    x1 = np.concatenate([[1.0], np.asarray(x, dtype=float)])
    return _assign_from_errors(np.abs(grid.coefs @ x1 - y), grid.taus)


def _assign_from_errors(err: np.ndarray, taus: np.ndarray) -> float:
    best = err.min()
    tied = np.flatnonzero(err == best)
    if tied.size == 1:
        return float(taus[tied[0]])
    cand = taus[tied]
    dist = np.abs(cand - 0.5)
    cand = cand[dist == dist.min()]
    return float(cand.min())


def _assign_all(survey: SurveyDataset, grid: TauGrid) -> np.ndarray:
    err = np.abs(grid.fitted(np.column_stack([np.ones(survey.n), survey.X])) - survey.y[:, None])
    return np.array([_assign_from_errors(err[j], grid.taus) for j in range(survey.n)])


def area_tau(unit_taus, lo: float, hi: float) -> float:
    """Sample average of unit-level taus, clamped to the grid range."""
    vals = np.asarray(unit_taus, dtype=float)
    if vals.size == 0:
        raise DataError("area_tau requires at least one unit")
    return float(np.clip(vals.mean(), lo, hi))


def smooth_delta(unit_taus_by_area: dict, area_taus: dict, m_s: int) -> dict:
    """Smoothed assignment variance: the pooled within-area sum of squares over
    (n - m_s), scaled by 1/n_i per area."""
    n = sum(len(v) for v in unit_taus_by_area.values())
    if n <= m_s:
        raise DataError("smooth_delta requires n > number of sampled areas")
    pooled = sum(
        float(np.sum((np.asarray(v, dtype=float) - area_taus[a]) ** 2))
        for a, v in unit_taus_by_area.items()
    )
    factor = pooled / (n - m_s)
    return {a: factor / len(v) for a, v in unit_taus_by_area.items()}


def _q_objective(eta, Z, tbar, wts):
    return float(np.sum(wts * (tbar - expit(Z @ eta)) ** 2))


def fit_logit_eta(zbar: dict, area_taus: dict, deltas: dict, max_iter: int = 500):
    """Weighted least squares on the logit scale: Gauss-Newton with backtracking
    from eta = 0, Nelder-Mead fallback on stall.

    Returns (eta, converged). Zero deltas are replaced by the smallest positive
    delta so no area gets infinite weight.
    """
    areas = sorted(zbar)
    Z = np.array([np.asarray(zbar[a], dtype=float) for a in areas])
    tbar = np.array([area_taus[a] for a in areas])
    dl = np.array([deltas[a] for a in areas], dtype=float)
    if len(areas) < Z.shape[1]:
        raise DataError("need at least as many sampled areas as eta coefficients")
    pos = dl[dl > 0]
    if pos.size == 0:
        dl = np.ones_like(dl)
    else:
        dl = np.where(dl > 0, dl, pos.min())
    wts = 1.0 / dl

    eta = np.zeros(Z.shape[1])
    q = _q_objective(eta, Z, tbar, wts)
    converged = False
    for _ in range(max_iter):
        p = expit(Z @ eta)
        resid = tbar - p
        g = p * (1.0 - p)
        J = Z * g[:, None]                       # Jacobian of the model part
        grad = -2.0 * J.T @ (wts * resid)
        if np.max(np.abs(grad)) < 1e-10:
            converged = True
            break
        A = (J * wts[:, None]).T @ J
        try:
            step = np.linalg.solve(A + 1e-12 * np.eye(A.shape[0]), J.T @ (wts * resid))
        except np.linalg.LinAlgError:
            break
        t = 1.0
        improved = False
        q_prev = q
        for _ in range(40):
            q_new = _q_objective(eta + t * step, Z, tbar, wts)
            if q_new < q:
                eta = eta + t * step
                q = q_new
                improved = True
                break
            t *= 0.5
        if not improved:
            break
        if q_prev - q < 1e-14 * max(1.0, q_prev):
            converged = True
            break

    if not converged:
        res = minimize(
            _q_objective, eta, args=(Z, tbar, wts), method="Nelder-Mead",
            options={"maxiter": max_iter, "xatol": 1e-10, "fatol": 1e-12},
        )
        if res.fun <= q:
            eta, q = res.x, float(res.fun)
        converged = bool(res.success) or np.max(np.abs(eta)) < 1e8
    return np.asarray(eta, dtype=float), converged


def predict_tau_oos(zbar_i, eta, lo: float, hi: float) -> float:
    """expit(Z'eta), clamped to the grid range."""
    z = np.asarray(zbar_i, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if z.shape != eta.shape:
        raise DataError("auxiliary vector and eta dimension mismatch")
    return float(np.clip(expit(z @ eta), lo, hi))


def estimate_taus(
    survey: SurveyDataset,
    grid: TauGrid,
    census_areas,
    area_aux: dict = None,
) -> TauEstimates:
    """Full tuning pipeline: unit assignment, area means for sampled areas,
    smoothed deltas, and the logit model for areas without sample."""
    unit = _assign_all(survey, grid)
    by_area = {a: unit[survey.area_rows(a)] for a in survey.areas}
    area_taus = {a: area_tau(v, grid.lo, grid.hi) for a, v in by_area.items()}
    deltas = smooth_delta(by_area, area_taus, m_s=len(by_area))
    source = {a: "sampled-mean" for a in area_taus}
    flags = {}

    oos = [a for a in census_areas if a not in area_taus]
    eta = None
    eta_ok = True
    if oos:
        if area_aux is None:
            raise DataError("out-of-sample areas present but no area auxiliary data")
        missing = [a for a in list(by_area) + oos if a not in area_aux]
        if missing:
            raise DataError(f"missing auxiliary vectors for areas {missing}")
        zbar_s = {a: area_aux[a] for a in by_area}
        eta, eta_ok = fit_logit_eta(zbar_s, area_taus, deltas)
        for a in oos:
            area_taus[a] = predict_tau_oos(area_aux[a], eta, grid.lo, grid.hi)
            source[a] = "oos-logit"
        if not eta_ok:
            flags["eta"] = "logit model optimizer did not converge"

    unit_tau = {
        (a, int(j)): float(t)
        for a in by_area
        for j, t in zip(range(len(by_area[a])), by_area[a])
    }
    return TauEstimates(
        unit_tau=unit_tau,
        area_tau=area_taus,
        delta=deltas,
        eta=eta,
        source=source,
        eta_converged=eta_ok,
        flags=flags,
    )
