"""Core domain objects: survey/census containers, the welfare transform,
FGT poverty measures and the design-weighted direct estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

VALID_ALPHAS = (0, 1, 2)


class DataError(ValueError):
    """Raised for invalid domain inputs (schemas, preconditions)."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SurveyDataset:
    """Unit-level sample: area labels, transformed response y, welfare,
    covariates X (n x p) and survey weights."""

    area_ids: np.ndarray        # shape (n,), object/str
    y: np.ndarray               # transformed response, shape (n,)
    welfare: np.ndarray         # original welfare units, shape (n,)
    X: np.ndarray               # shape (n, p)
    weights: np.ndarray         # shape (n,)
    area_index: dict = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.area_ids)
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if X.shape[0] != n:
            raise DataError(f"X has {X.shape[0]} rows, expected {n}")
        for name in ("y", "welfare", "weights"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (n,):
                raise DataError(f"{name} has shape {v.shape}, expected ({n},)")
            object.__setattr__(self, name, _freeze(v))
        object.__setattr__(self, "X", _freeze(X))
        object.__setattr__(self, "area_ids", _freeze(np.asarray(self.area_ids)))
        idx: dict = {}
        for pos, aid in enumerate(self.area_ids):
            idx.setdefault(aid, []).append(pos)
        object.__setattr__(
            self, "area_index", {a: np.asarray(p, dtype=int) for a, p in idx.items()}
        )
        if n == 0:
            raise DataError("empty survey dataset")

    @property
    def n(self) -> int:
        return len(self.area_ids)

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def areas(self) -> list:
        return sorted(self.area_index)

    def area_rows(self, area_id) -> np.ndarray:
        return self.area_index[area_id]

    def require_positive_weights(self):
        if not np.all(self.weights > 0):
            raise DataError("direct estimation requires strictly positive weights")


@dataclass(frozen=True)
class CensusDataset:
    """Unit-level auxiliary records for every population unit, plus optional
    area-level auxiliary means used by the out-of-sample tuning model."""

    area_ids: np.ndarray        # shape (N,)
    X: np.ndarray               # shape (N, p)
    area_aux: dict = None       # area_id -> aux mean vector (length q), optional
    area_index: dict = field(default=None, repr=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        ids = np.asarray(self.area_ids)
        if X.shape[0] != len(ids):
            raise DataError(f"X has {X.shape[0]} rows, expected {len(ids)}")
        object.__setattr__(self, "X", _freeze(X))
        object.__setattr__(self, "area_ids", _freeze(ids))
        idx: dict = {}
        for pos, aid in enumerate(ids):
            idx.setdefault(aid, []).append(pos)
        object.__setattr__(
            self, "area_index", {a: np.asarray(p, dtype=int) for a, p in idx.items()}
        )
        if self.area_aux is not None:
            aux = {a: _freeze(np.asarray(v, dtype=float)) for a, v in self.area_aux.items()}
            object.__setattr__(self, "area_aux", aux)

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def areas(self) -> list:
        return sorted(self.area_index)

    @property
    def area_sizes(self) -> dict:
        return {a: len(rows) for a, rows in self.area_index.items()}

    def area_rows(self, area_id) -> np.ndarray:
        return self.area_index[area_id]


@dataclass(frozen=True)
class WelfareTransform:
    """Shifted-log transform: forward(E) = log(E + shift), inverse(Y) = exp(Y) - shift."""

    shift: float = 0.0

    def __post_init__(self):
        if self.shift < 0:
            raise DataError("transform shift must be >= 0")

    def forward(self, value):
        value = np.asarray(value, dtype=float)
        if np.any(value <= -self.shift):
            raise DataError("forward transform requires welfare > -shift")
        return np.log(value + self.shift)

    def inverse(self, value):
        return np.exp(np.asarray(value, dtype=float)) - self.shift


def welfare_transform(value, transform: WelfareTransform, direction: str):
    """Apply the welfare transform in the given direction ('forward'|'inverse')."""
    if direction == "forward":
        return transform.forward(value)
    if direction == "inverse":
        return transform.inverse(value)
    raise DataError(f"unknown direction {direction!r}")


@dataclass(frozen=True)
class FgtEstimate:
    """Per-area, per-alpha point estimate with optional MSPE and CV."""

    area_id: object
    alpha: int
    value: float
    mspe: float = None
    cv: float = None


def _check_alpha(alpha):
    if alpha not in VALID_ALPHAS:
        raise DataError(f"alpha must be one of {VALID_ALPHAS}, got {alpha}")


def fgt_unit(e, z: float, alpha: int):
    """Unit-level FGT contribution ((z - e)/z)^alpha * 1{e < z}.

    Accepts scalars or arrays of welfare values.
    """
    if z <= 0:
        raise DataError("poverty line must be positive")
    _check_alpha(alpha)
    e = np.asarray(e, dtype=float)
    poor = e < z
    if alpha == 0:
        out = poor.astype(float)
    else:
        out = np.where(poor, ((z - e) / z) ** alpha, 0.0)
    return float(out) if out.ndim == 0 else out


def fgt_area(unit_values) -> float:
    """Area-level FGT measure: arithmetic mean of unit contributions."""
    vals = np.asarray(unit_values, dtype=float)
    if vals.size == 0:
        raise DataError("fgt_area requires a non-empty list")
    return float(vals.mean())


def direct_fgt(welfare, weights, z: float, alpha: int):
    """Design-weighted (Hajek) direct FGT estimator for one area.

    Returns (estimate, variance, cv); cv is None when the estimate is zero.
    variance = (1/Nhat^2) sum_j w_j (w_j - 1) (F_j - est)^2 with Nhat = sum_j w_j.
    """
    welfare = np.asarray(welfare, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if welfare.size == 0:
        raise DataError("empty area sample")
    if np.any(weights <= 0):
        raise DataError("direct estimator requires strictly positive weights")
    nhat = weights.sum()
    if nhat <= 0:
        raise DataError("zero total weight")
    f = fgt_unit(welfare, z, alpha)
    est = float(np.sum(weights * f) / nhat)
    var = float(np.sum(weights * (weights - 1.0) * (f - est) ** 2) / nhat**2)
    var = max(var, 0.0)
    cv = math.sqrt(var) / est if est > 0 else None
    return est, var, cv
