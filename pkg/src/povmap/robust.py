"""Robust kernel: Huber psi, the asymmetric influence function, MAD scale,
the E[psi^2] constant for standard normal input, and the IRLS solver for the
area-specific M-quantile estimating equation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr
from scipy.stats import norm

from .data import DataError

DEFAULT_HUBER_C = 1.345
MAD_CONSISTENCY = 0.6745
SCALE_FLOOR = 1e-8


class ScaleDegenerateWarning(UserWarning):
    """All residuals identical; MAD scale replaced by the floor value."""


@dataclass(frozen=True)
class PsiConfig:
    """Tuning of the asymmetric influence function."""

    huber_c: float = DEFAULT_HUBER_C
    tau: float = 0.5

    def __post_init__(self):
        if self.huber_c <= 0:
            raise DataError("huber_c must be positive")
        if not 0.0 < self.tau < 1.0:
            raise DataError("tau must lie in (0, 1)")


@dataclass(frozen=True)
class RegressionFit:
    """Solution of one M-quantile regression: intercept, slopes, residual
    scale (the per-iteration MAD), and solver metadata."""

    intercept: float
    slopes: np.ndarray
    scale: float
    iterations: int
    converged: bool

    @property
    def coef(self) -> np.ndarray:
        return np.concatenate([[self.intercept], self.slopes])


def huber_psi(r, c: float = DEFAULT_HUBER_C):
    """Huber influence function: identity inside [-c, c], clipped outside."""
    if c <= 0:
        raise DataError("tuning constant must be positive")
    r = np.asarray(r, dtype=float)
    out = np.clip(r, -c, c)
    return float(out) if out.ndim == 0 else out


def asymmetric_psi(r, tau: float, c: float = DEFAULT_HUBER_C):
    """Asymmetric influence function 2*psi(r)*[tau 1{r>0} + (1-tau) 1{r<=0}]."""
    if not 0.0 < tau < 1.0:
        raise DataError("tau must lie in (0, 1)")
    r = np.asarray(r, dtype=float)
    w = np.where(r > 0, tau, 1.0 - tau)
    out = 2.0 * huber_psi(r, c) * w
    return float(out) if out.ndim == 0 else out


def w_star(c: float = DEFAULT_HUBER_C) -> float:
    """E[psi^2(u)] for u ~ N(0,1), in closed form."""
    if c <= 0:
        raise DataError("tuning constant must be positive")
    return float(
        (2.0 * norm.cdf(c) - 1.0 - 2.0 * c * norm.pdf(c))
        + 2.0 * c**2 * (1.0 - norm.cdf(c))
    )


def mad_scale(residuals) -> float:
    """Median absolute deviation scale, normalized for normal consistency.

    Falls back to a small floor (with a warning) when all residuals coincide.
    """
    r = np.asarray(residuals, dtype=float)
    if r.size < 2:
        raise DataError("mad_scale needs at least 2 residuals")
    s = np.median(np.abs(r - np.median(r))) / MAD_CONSISTENCY
    if s <= 0.0:
        warnings.warn("all residuals identical; using floor scale", ScaleDegenerateWarning)
        return SCALE_FLOOR
    return float(s)


def _check_full_rank(X: np.ndarray):
    _, R, piv = qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(X.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    bad = piv[diag <= tol]
    if bad.size:
        raise DataError(f"design matrix is rank deficient in columns {sorted(bad.tolist())}")


def _irls_weights(r: np.ndarray, tau: float, c: float) -> np.ndarray:
    # psi_tau(r)/r, continuous limit 2*[tau 1{r>0} + (1-tau) 1{r<=0}] at r = 0
    side = np.where(r > 0, tau, 1.0 - tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        huber_w = np.where(np.abs(r) <= c, 1.0, c / np.abs(r))
    huber_w = np.where(r == 0.0, 1.0, huber_w)
    return 2.0 * side * huber_w


def mquantile_regress(
    X: np.ndarray,
    y: np.ndarray,
    tau: float,
    c: float = DEFAULT_HUBER_C,
    tol: float = 1e-8,
    max_iter: int = 200,
    start: np.ndarray = None,
) -> RegressionFit:
    """Solve the asymmetric-psi estimating equation by IRLS.

    X is the full design including the intercept column (first column); the
    residual scale is re-estimated by MAD each iteration.
    """
    if not 0.0 < tau < 1.0:
        raise DataError("tau must lie in (0, 1)")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    if n <= k:
        raise DataError(f"need more observations ({n}) than design columns ({k})")
    _check_full_rank(X)

    if start is None:
        beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    else:
        beta = np.asarray(start, dtype=float).copy()

    converged = False
    scale = 1.0
    it = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScaleDegenerateWarning)
        for it in range(1, max_iter + 1):
            resid = y - X @ beta
            scale = mad_scale(resid)
            r = resid / scale
            # normalized estimating equation (1/n) X' psi_tau(r)
            g = X.T @ asymmetric_psi(r, tau, c) / n
            if np.max(np.abs(g)) <= tol:
                converged = True
                break
            w = _irls_weights(r, tau, c)
            sw = np.sqrt(w)
            beta_new, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
            delta = np.max(np.abs(beta_new - beta)) / max(1.0, np.max(np.abs(beta_new)))
            beta = beta_new
            if delta <= tol:
                resid = y - X @ beta
                scale = mad_scale(resid)
                g = X.T @ asymmetric_psi(resid / scale, tau, c) / n
                converged = bool(np.max(np.abs(g)) <= max(tol, 1e-6))
                break

    return RegressionFit(
        intercept=float(beta[0]),
        slopes=np.asarray(beta[1:], dtype=float),
        scale=float(scale),
        iterations=it,
        converged=converged,
    )
