"""File formats and run configuration: CSV loaders with schema validation,
result writers, the flat key-value config file, and the run manifest."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .data import CensusDataset, DataError, SurveyDataset, WelfareTransform

CSV_SIG_DIGITS = 6


@dataclass(frozen=True)
class RunConfig:
    survey: str = None
    census: str = None
    area_aux: str = None
    output_dir: str = "."
    shift: float = 0.0               # welfare transform constant
    z: float = None                  # poverty line
    huber_c: float = 1.345
    grid_lo: float = 0.01
    grid_hi: float = 0.99
    grid_step: float = 0.01
    K: int = 100
    B: int = 100
    seed: int = None
    threads: int = 1
    estimators: str = "cls"
    refit_tau: bool = True
    alphas: str = "0,1,2"

    def grid(self) -> np.ndarray:
        return np.round(
            np.arange(self.grid_lo, self.grid_hi + self.grid_step / 2, self.grid_step), 10
        )

    def alpha_tuple(self) -> tuple:
        return tuple(int(a) for a in str(self.alphas).split(","))

    def transform(self) -> WelfareTransform:
        return WelfareTransform(shift=self.shift)


_BOOL_KEYS = {"refit_tau"}


def _coerce(name: str, value: str):
    ftypes = {f.name: f.type for f in fields(RunConfig)}
    if name not in ftypes:
        raise DataError(f"unknown config key {name!r}")
    if name in _BOOL_KEYS:
        return str(value).lower() in ("1", "true", "yes")
    current = getattr(RunConfig(), name)
    for cast in (int, float):
        if isinstance(current, cast) and not isinstance(current, bool):
            return cast(value)
    if name in ("z", "seed"):
        return float(value) if name == "z" else int(value)
    return value


def load_run_config(path=None, overrides: dict = None) -> RunConfig:
    """Flat key=value config file plus flag overrides; flags win."""
    values = {}
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, val = line.partition("=")
            values[key.strip()] = _coerce(key.strip(), val.strip())
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = _coerce(key, str(val))
    return replace(RunConfig(), **values)


def _read_csv(path) -> pd.DataFrame:
    try:
        return pd.read_csv(path)
    except Exception as exc:
        raise DataError(f"failed to parse {path}: {exc}") from exc


def _covariate_columns(df: pd.DataFrame, path) -> list:
    cols = [c for c in df.columns if c.startswith("x") and c[1:].isdigit()]
    cols.sort(key=lambda c: int(c[1:]))
    if not cols:
        raise DataError(f"{path}: no covariate columns x1..xp found")
    expected = [f"x{i}" for i in range(1, len(cols) + 1)]
    if cols != expected:
        raise DataError(f"{path}: covariate columns must be consecutive x1..xp, got {cols}")
    return cols


def load_survey(path, transform: WelfareTransform) -> SurveyDataset:
    """Survey CSV: area_id,weight,welfare,x1..xp (or y instead of welfare)."""
    df = _read_csv(path)
    for col in ("area_id", "weight"):
        if col not in df.columns:
            raise DataError(f"{path}: missing required column {col!r}")
    has_welfare = "welfare" in df.columns
    has_y = "y" in df.columns
    if not has_welfare and not has_y:
        raise DataError(f"{path}: need a 'welfare' or 'y' column")
    xcols = _covariate_columns(df, path)
    if has_welfare:
        welfare = df["welfare"].to_numpy(dtype=float)
        y = transform.forward(welfare)
    else:
        y = df["y"].to_numpy(dtype=float)
        welfare = transform.inverse(y)
    return SurveyDataset(
        area_ids=df["area_id"].astype(str).to_numpy(),
        y=y,
        welfare=welfare,
        X=df[xcols].to_numpy(dtype=float),
        weights=df["weight"].to_numpy(dtype=float),
    )


def load_census(path, aux_path=None) -> CensusDataset:
    """Census CSV: area_id,x1..xp; optional area auxiliary CSV: area_id,N,z1..zq."""
    df = _read_csv(path)
    if "area_id" not in df.columns:
        raise DataError(f"{path}: missing required column 'area_id'")
    xcols = _covariate_columns(df, path)
    area_aux = None
    if aux_path is not None:
        aux = _read_csv(aux_path)
        for col in ("area_id", "N"):
            if col not in aux.columns:
                raise DataError(f"{aux_path}: missing required column {col!r}")
        zcols = [c for c in aux.columns if c.startswith("z") and c[1:].isdigit()]
        zcols.sort(key=lambda c: int(c[1:]))
        if not zcols:
            raise DataError(f"{aux_path}: no auxiliary columns z1..zq found")
        area_aux = {
            str(row["area_id"]): row[zcols].to_numpy(dtype=float)
            for _, row in aux.iterrows()
        }
    return CensusDataset(
        area_ids=df["area_id"].astype(str).to_numpy(),
        X=df[xcols].to_numpy(dtype=float),
        area_aux=area_aux,
    )


def validate_and_load(config: RunConfig):
    """Load and cross-check the survey and census; reports out-of-sample areas.

    Returns (survey, census, info).
    """
    if config.survey is None or config.census is None:
        raise DataError("config must set both survey and census paths")
    transform = config.transform()
    survey = load_survey(config.survey, transform)
    census = load_census(config.census, config.area_aux)
    missing = [a for a in survey.areas if a not in census.area_index]
    if missing:
        raise DataError(f"survey areas absent from census: {missing}")
    if survey.p != census.p:
        raise DataError(
            f"covariate count mismatch: survey has x1..x{survey.p}, census x1..x{census.p}"
        )
    oos = [a for a in census.areas if a not in survey.area_index]
    info = {
        "n": survey.n,
        "sampled_areas": len(survey.areas),
        "census_areas": len(census.areas),
        "out_of_sample_areas": len(oos),
        "out_of_sample_ids": oos,
    }
    return survey, census, info


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return ""
    if isinstance(v, float):
        return f"{v:.{CSV_SIG_DIGITS}g}"
    return str(v)


def write_csv(path, rows: list, columns: list):
    """CSV with 6 significant digits for floats."""
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row.get(c)) for c in columns) + "\n")


def write_params(params: dict, out_dir, stem: str = "params"):
    """Fitted parameters as CSV (6 sig digits) and JSON (full precision)."""
    out_dir = Path(out_dir)
    areas = sorted(params)
    p = len(params[areas[0]].slopes)
    columns = (
        ["area_id", "beta0"]
        + [f"slope_{j}" for j in range(1, p + 1)]
        + ["sigma_gamma2", "sigma_eps2", "tau", "n_i", "B_i", "resid_mean"]
    )
    rows = []
    blob = {}
    for a in areas:
        pa = params[a]
        row = {"area_id": a, "beta0": pa.beta0}
        row.update({f"slope_{j+1}": float(s) for j, s in enumerate(pa.slopes)})
        row.update(
            {
                "sigma_gamma2": pa.sigma_gamma2,
                "sigma_eps2": pa.sigma_eps2,
                "tau": pa.tau,
                "n_i": pa.n_i,
                "B_i": pa.shrinkage,
                "resid_mean": pa.resid_mean,
            }
        )
        rows.append(row)
        blob[str(a)] = {
            "beta0": pa.beta0,
            "slopes": [float(s) for s in pa.slopes],
            "sigma_gamma2": pa.sigma_gamma2,
            "sigma_eps2": pa.sigma_eps2,
            "tau": pa.tau,
            "n_i": pa.n_i,
            "B_i": pa.shrinkage,
            "resid_mean": pa.resid_mean,
        }
    write_csv(out_dir / f"{stem}.csv", rows, columns)
    (out_dir / f"{stem}.json").write_text(json.dumps(blob, indent=2, sort_keys=True))


def load_params(path) -> dict:
    """Read back the JSON parameter file into AreaParams."""
    from .fit import AreaParams

    blob = json.loads(Path(path).read_text())
    params = {}
    for a, d in blob.items():
        params[a] = AreaParams(
            area_id=a,
            beta0=d["beta0"],
            slopes=np.asarray(d["slopes"], dtype=float),
            sigma_gamma2=d["sigma_gamma2"],
            sigma_eps2=d["sigma_eps2"],
            tau=d["tau"],
            n_i=d["n_i"],
            shrinkage=d["B_i"],
            resid_mean=d["resid_mean"],
        )
    return params


def config_hash(config: RunConfig) -> str:
    payload = json.dumps(
        {f.name: getattr(config, f.name) for f in fields(RunConfig)}, sort_keys=True
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def write_manifest(out_dir, config: RunConfig, extra: dict = None):
    from . import __version__

    manifest = {
        "config": {f.name: getattr(config, f.name) for f in fields(RunConfig)},
        "config_hash": config_hash(config),
        "seed": config.seed,
        "version": __version__,
    }
    manifest.update(extra or {})
    (Path(out_dir) / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
