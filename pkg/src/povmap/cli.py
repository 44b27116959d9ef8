"""Command-line interface: fit, predict, mspe, direct, simulate, diagnose."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
import pandas as pd

from .bootstrap import BootstrapConfig, bootstrap_mspe
from .data import DataError, direct_fgt
from .diagnostics import cv_ecdf, direct_model_correlation, w_statistic
from .fit import FitConfig, fit_nerhdp
from .io import (
    RunConfig,
    load_params,
    load_run_config,
    validate_and_load,
    write_csv,
    write_manifest,
    write_params,
)
from .predict import PredictionConfig, ebp_fgt, estimates_to_rows
from .simulation import (
    ExperimentConfig,
    PopulationSpec,
    generate_population,
    run_experiment,
    srs_draw,
)

CONFIG_FLAGS = [f.name for f in fields(RunConfig)]


def _add_config_flags(parser):
    parser.add_argument("--config", help="flat key=value config file")
    for name in CONFIG_FLAGS:
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name, default=None)


def _resolve_config(args) -> RunConfig:
    overrides = {name: getattr(args, name) for name in CONFIG_FLAGS}
    return load_run_config(args.config, overrides)


def _fit_config(cfg: RunConfig) -> FitConfig:
    return FitConfig(grid=cfg.grid(), huber_c=cfg.huber_c)


def _pred_config(cfg: RunConfig, seed) -> PredictionConfig:
    if cfg.z is None:
        raise DataError("poverty line z must be set (flag --z or config)")
    return PredictionConfig(
        z=cfg.z, K=cfg.K, alphas=cfg.alpha_tuple(), transform=cfg.transform(),
        seed=0 if seed is None else int(seed), threads=cfg.threads,
    )


def _require_seed(cfg: RunConfig, command: str):
    if cfg.seed is None:
        raise DataError(f"--seed is mandatory for {command!r}")


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_fit(args) -> int:
    cfg = _resolve_config(args)
    survey, census, info = validate_and_load(cfg)
    params, report = fit_nerhdp(survey, census, _fit_config(cfg))
    out = _out_dir(cfg)
    write_params(params, out)
    (out / "fit_report.json").write_text(
        json.dumps(
            {
                "tau_source": {str(k): v for k, v in report.tau_source.items()},
                "step1_converged": {str(k): bool(v) for k, v in report.step1_converged.items()},
                "step1_iterations": {str(k): int(v) for k, v in report.step1_iterations.items()},
                "grid_converged": [bool(v) for v in report.grid_converged],
                "variance_iterations": report.variance_iterations,
                "variance_converged": report.variance_converged,
                "flags": {str(k): v for k, v in report.flags.items()},
                "data": info,
            },
            indent=2, sort_keys=True,
        )
    )
    write_manifest(out, cfg, {"command": "fit"})
    print(f"fitted {len(params)} areas ({info['out_of_sample_areas']} out-of-sample)")
    return 0


def cmd_predict(args) -> int:
    cfg = _resolve_config(args)
    from .io import load_census

    census = load_census(cfg.census, cfg.area_aux)
    params = load_params(args.params)
    estimates = ebp_fgt(census, params, _pred_config(cfg, cfg.seed))
    out = _out_dir(cfg)
    write_csv(out / "estimates.csv", estimates_to_rows(estimates), ["area_id", "alpha", "estimate"])
    write_manifest(out, cfg, {"command": "predict"})
    print(f"predicted {len(estimates)} areas")
    return 0


def cmd_mspe(args) -> int:
    cfg = _resolve_config(args)
    _require_seed(cfg, "mspe")
    survey, census, _ = validate_and_load(cfg)
    fit_config = _fit_config(cfg)
    params, _ = fit_nerhdp(survey, census, fit_config)
    pred = _pred_config(cfg, cfg.seed)
    estimates = ebp_fgt(census, params, pred)
    boot = BootstrapConfig(B=cfg.B, seed=int(cfg.seed), refit_tau=cfg.refit_tau, threads=cfg.threads)
    results, diag = bootstrap_mspe(
        survey, census, params, boot, pred, fit_config, point_estimates=estimates
    )
    rows = []
    for a in sorted(estimates):
        for alpha in sorted(estimates[a]):
            mspe, cv = results[a][alpha]
            rows.append(
                {
                    "area_id": a, "alpha": alpha,
                    "estimate": estimates[a][alpha].value, "mspe": mspe, "cv": cv,
                }
            )
    out = _out_dir(cfg)
    write_csv(out / "estimates.csv", rows, ["area_id", "alpha", "estimate", "mspe", "cv"])
    (out / "bootstrap_diagnostics.json").write_text(json.dumps(diag, indent=2, sort_keys=True))
    write_manifest(out, cfg, {"command": "mspe"})
    print(f"bootstrap MSPE over {diag['successes']}/{diag['replicates']} replicates")
    return 0


def cmd_direct(args) -> int:
    cfg = _resolve_config(args)
    survey, _, _ = validate_and_load(cfg) if cfg.census else (None, None, None)
    if survey is None:
        from .io import load_survey

        survey = load_survey(cfg.survey, cfg.transform())
    if cfg.z is None:
        raise DataError("poverty line z must be set (flag --z or config)")
    survey.require_positive_weights()
    rows = []
    for a in survey.areas:
        pos = survey.area_rows(a)
        for alpha in cfg.alpha_tuple():
            est, var, cv = direct_fgt(survey.welfare[pos], survey.weights[pos], cfg.z, alpha)
            rows.append({"area_id": a, "alpha": alpha, "estimate": est, "variance": var, "cv": cv})
    out = _out_dir(cfg)
    write_csv(out / "direct.csv", rows, ["area_id", "alpha", "estimate", "variance", "cv"])
    write_manifest(out, cfg, {"command": "direct"})
    print(f"direct estimates for {len(survey.areas)} areas")
    return 0


SIM_KEYS = {
    "m": int, "size_lo": int, "size_hi": int, "p": int, "beta0": float,
    "slope_heterogeneity": float, "err_sd_lo": float, "err_sd_hi": float,
    "sigma_gamma": float, "shift": float, "poverty_line_factor": float,
    "aux_signal": float,
    "population_seed": int, "R": int, "fraction": float, "oos_count": int,
    "estimators": str, "K": int, "seed": int, "baseline": str,
    "grid_step": float, "output_dir": str,
}

SIM_DEFAULTS = {
    "m": 40, "size_lo": 80, "size_hi": 200, "p": 2, "beta0": 7.0,
    "slope_heterogeneity": 0.5, "err_sd_lo": 0.3, "err_sd_hi": 1.2,
    "sigma_gamma": 0.2, "shift": 0.0, "poverty_line_factor": 0.6, "aux_signal": 0.0,
    "population_seed": 1, "R": 1000, "fraction": 0.1, "oos_count": 0,
    "estimators": "cls,mr,direct", "K": 100, "seed": None, "baseline": "direct",
    "grid_step": 0.05, "output_dir": ".",
}


def load_sim_config(path=None, overrides=None) -> dict:
    values = dict(SIM_DEFAULTS)
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in SIM_KEYS:
                raise DataError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = SIM_KEYS[key](val.strip())
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = SIM_KEYS[key](val)
    return values


def cmd_simulate(args) -> int:
    from .data import WelfareTransform

    sim = load_sim_config(args.config, {"seed": args.seed, "output_dir": args.output_dir, "R": args.R})
    if sim["seed"] is None:
        raise DataError("--seed is mandatory for 'simulate'")
    spec = PopulationSpec(
        m=sim["m"], size_range=(sim["size_lo"], sim["size_hi"]), p=sim["p"],
        beta0=sim["beta0"], slope_heterogeneity=sim["slope_heterogeneity"],
        error_sd_range=(sim["err_sd_lo"], sim["err_sd_hi"]),
        sigma_gamma=sim["sigma_gamma"],
        poverty_line_factor=sim["poverty_line_factor"],
        aux_signal=sim["aux_signal"],
        transform=WelfareTransform(shift=sim["shift"]),
        seed=sim["population_seed"],
    )
    population = generate_population(spec)
    oos = tuple(population.census.areas[: sim["oos_count"]])
    grid = np.round(np.arange(0.05, 0.96, sim["grid_step"]), 10)
    config = ExperimentConfig(
        R=sim["R"], fraction=sim["fraction"], out_of_sample_area_ids=oos,
        estimators=tuple(sim["estimators"].split(",")), K=sim["K"],
        seed=sim["seed"], baseline=sim["baseline"], fit=FitConfig(grid=grid),
        eval_area_ids=oos or None,
    )
    report, raw, failures = run_experiment(population, config)
    out = Path(sim["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    report.per_area.to_csv(out / "metrics_per_area.csv", index=False, float_format="%.6g")
    report.summary.to_csv(out / "metrics.csv", index=False, float_format="%.6g")
    raw.to_csv(out / "raw_estimates.csv", index=False, float_format="%.6g")
    (out / "manifest.json").write_text(
        json.dumps({"command": "simulate", "config": sim, "failures": failures}, indent=2, sort_keys=True)
    )
    print(report.summary.to_string(index=False))
    return 0


def cmd_diagnose(args) -> int:
    direct = pd.read_csv(args.direct)
    model = pd.read_csv(args.model)
    merged = direct.merge(model, on=["area_id", "alpha"], suffixes=("_direct", "_model"))
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    ecdf_rows = []
    for alpha, grp in merged.groupby("alpha"):
        entry = {
            "correlation": direct_model_correlation(
                grp["estimate_direct"], grp["estimate_model"]
            )
        }
        if "mspe" in grp.columns and "variance" in grp.columns:
            ws = w_statistic(
                grp["estimate_direct"], grp["variance"],
                grp["estimate_model"], grp["mspe"], grp["area_id"].to_numpy(),
            )
            entry.update(
                {
                    "W": ws.value, "df": ws.df, "chi2_95": ws.chi2_95,
                    "coherent": ws.coherent, "excluded_areas": ws.excluded_areas,
                }
            )
        for kind in ("direct", "model"):
            col = "cv_direct" if kind == "direct" else "cv_model"
            if col not in grp.columns:
                continue
            cvs = grp[col].dropna().to_numpy(dtype=float) * 100.0
            if cvs.size == 0:
                continue
            table, exceed = cv_ecdf(cvs)
            entry[f"cv_exceedance_{kind}"] = exceed
            ecdf_rows.extend(
                {"alpha": alpha, "estimator": kind, "cv_percent": cv, "fraction_le": fr}
                for cv, fr in table
            )
        results[str(alpha)] = entry
    (out / "diagnostics.json").write_text(json.dumps(results, indent=2, sort_keys=True))
    write_csv(
        out / "cv_ecdf.csv", ecdf_rows, ["alpha", "estimator", "cv_percent", "fraction_le"]
    )
    print(json.dumps(results, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="povmap",
        description="Small area poverty mapping: model fit, EBP prediction, "
        "bootstrap MSPE, direct estimation, simulation, diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit the area-specific nested error model")
    _add_config_flags(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_pred = sub.add_parser("predict", help="Monte Carlo EBP of FGT measures over the census")
    _add_config_flags(p_pred)
    p_pred.add_argument("--params", required=True, help="params.json from 'fit'")
    p_pred.set_defaults(func=cmd_predict)

    p_mspe = sub.add_parser("mspe", help="parametric bootstrap MSPE and CV")
    _add_config_flags(p_mspe)
    p_mspe.set_defaults(func=cmd_mspe)

    p_dir = sub.add_parser("direct", help="design-weighted direct estimates")
    _add_config_flags(p_dir)
    p_dir.set_defaults(func=cmd_direct)

    p_sim = sub.add_parser("simulate", help="design-based simulation experiment")
    p_sim.add_argument("--config", help="flat key=value experiment config")
    p_sim.add_argument("--seed", default=None)
    p_sim.add_argument("--R", default=None)
    p_sim.add_argument("--output-dir", dest="output_dir", default=None)
    p_sim.set_defaults(func=cmd_simulate)

    p_diag = sub.add_parser("diagnose", help="direct-vs-model diagnostics (W, CV ECDF, correlation)")
    p_diag.add_argument("--direct", required=True, help="direct.csv from 'direct'")
    p_diag.add_argument("--model", required=True, help="estimates.csv from 'predict' or 'mspe'")
    p_diag.add_argument("--output-dir", dest="output_dir", default=".")
    p_diag.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
