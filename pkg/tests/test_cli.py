"""Command-line interface: every subcommand end to end on small fixtures,
mandatory-seed enforcement, error exit codes, and thread invariance of the
output files."""

import json

import numpy as np
import pytest

from povmap.cli import main
from tests.conftest import make_survey
from tests.test_io import write_census_csv, write_survey_csv


@pytest.fixture()
def csv_fixture(tmp_path):
    """Small survey/census CSV pair plus a poverty line near the median."""
    survey = make_survey(m=4, n_i=10, sigma_gamma=0.3, sigma_eps=0.6, seed=21)
    spath, cpath = tmp_path / "survey.csv", tmp_path / "census.csv"
    write_survey_csv(spath, survey)
    write_census_csv(cpath, survey.area_ids, survey.X)
    z = float(np.median(survey.welfare))
    return {"survey": spath, "census": cpath, "z": z, "dir": tmp_path}


def _fit(fx, out):
    return main([
        "fit", "--survey", str(fx["survey"]), "--census", str(fx["census"]),
        "--grid-step", "0.1", "--grid-lo", "0.1", "--grid-hi", "0.9",
        "--output-dir", str(out),
    ])


class TestFit:
    def test_writes_params_and_report(self, csv_fixture, tmp_path):
        out = tmp_path / "fit"
        assert _fit(csv_fixture, out) == 0
        assert (out / "params.csv").exists()
        assert (out / "params.json").exists()
        report = json.loads((out / "fit_report.json").read_text())
        assert report["variance_converged"] is True
        assert report["data"]["sampled_areas"] == 4
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "fit"

    def test_missing_file_exit_code(self, tmp_path):
        rc = main([
            "fit", "--survey", str(tmp_path / "nope.csv"),
            "--census", str(tmp_path / "nope.csv"),
        ])
        assert rc == 1


class TestPredict:
    def test_estimates_csv(self, csv_fixture, tmp_path):
        fit_out, pred_out = tmp_path / "fit", tmp_path / "pred"
        _fit(csv_fixture, fit_out)
        rc = main([
            "predict", "--census", str(csv_fixture["census"]),
            "--params", str(fit_out / "params.json"),
            "--z", str(csv_fixture["z"]), "--K", "20", "--seed", "3",
            "--output-dir", str(pred_out),
        ])
        assert rc == 0
        lines = (pred_out / "estimates.csv").read_text().splitlines()
        assert lines[0] == "area_id,alpha,estimate"
        assert len(lines) == 1 + 4 * 3          # 4 areas x 3 alphas

    def test_thread_invariant_bytes(self, csv_fixture, tmp_path):
        fit_out = tmp_path / "fit"
        _fit(csv_fixture, fit_out)
        blobs = []
        for threads in ("1", "4"):
            out = tmp_path / f"pred{threads}"
            main([
                "predict", "--census", str(csv_fixture["census"]),
                "--params", str(fit_out / "params.json"),
                "--z", str(csv_fixture["z"]), "--K", "30", "--seed", "9",
                "--threads", threads, "--output-dir", str(out),
            ])
            blobs.append((out / "estimates.csv").read_bytes())
        assert blobs[0] == blobs[1]


class TestMspe:
    def test_seed_mandatory(self, csv_fixture, tmp_path, capsys):
        rc = main([
            "mspe", "--survey", str(csv_fixture["survey"]),
            "--census", str(csv_fixture["census"]),
            "--z", str(csv_fixture["z"]), "--output-dir", str(tmp_path / "m"),
        ])
        assert rc == 1
        assert "seed" in capsys.readouterr().err

    def test_outputs(self, csv_fixture, tmp_path):
        out = tmp_path / "mspe"
        rc = main([
            "mspe", "--survey", str(csv_fixture["survey"]),
            "--census", str(csv_fixture["census"]),
            "--z", str(csv_fixture["z"]), "--seed", "5", "--K", "10", "--B", "4",
            "--grid-step", "0.1", "--grid-lo", "0.1", "--grid-hi", "0.9",
            "--alphas", "0", "--output-dir", str(out),
        ])
        assert rc == 0
        lines = (out / "estimates.csv").read_text().splitlines()
        assert lines[0] == "area_id,alpha,estimate,mspe,cv"
        assert len(lines) == 1 + 4
        diag = json.loads((out / "bootstrap_diagnostics.json").read_text())
        assert diag["replicates"] == 4
        assert diag["successes"] == 4


class TestDirect:
    def test_outputs(self, csv_fixture, tmp_path):
        out = tmp_path / "direct"
        rc = main([
            "direct", "--survey", str(csv_fixture["survey"]),
            "--z", str(csv_fixture["z"]), "--output-dir", str(out),
        ])
        assert rc == 0
        lines = (out / "direct.csv").read_text().splitlines()
        assert lines[0] == "area_id,alpha,estimate,variance,cv"
        assert len(lines) == 1 + 4 * 3


class TestSimulate:
    def test_seed_mandatory(self, tmp_path, capsys):
        rc = main(["simulate", "--output-dir", str(tmp_path)])
        assert rc == 1
        assert "seed" in capsys.readouterr().err

    def test_small_run(self, tmp_path):
        cfgfile = tmp_path / "sim.cfg"
        cfgfile.write_text(
            "m = 6\nsize_lo = 30\nsize_hi = 40\nR = 1\nfraction = 0.3\n"
            "estimators = cls,direct\nK = 10\nbaseline = direct\ngrid_step = 0.2\n"
            "sigma_gamma = 0.3\npopulation_seed = 2\n"
        )
        rc = main([
            "simulate", "--config", str(cfgfile), "--seed", "4",
            "--output-dir", str(tmp_path / "sim"),
        ])
        assert rc == 0
        out = tmp_path / "sim"
        for name in ("metrics.csv", "metrics_per_area.csv", "raw_estimates.csv", "manifest.json"):
            assert (out / name).exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["failures"] == []

    def test_unknown_config_key(self, tmp_path, capsys):
        cfgfile = tmp_path / "sim.cfg"
        cfgfile.write_text("bogus = 1\n")
        rc = main(["simulate", "--config", str(cfgfile), "--seed", "1"])
        assert rc == 1
        assert "bogus" in capsys.readouterr().err


class TestDiagnose:
    def test_end_to_end(self, csv_fixture, tmp_path):
        fit_out = tmp_path / "fit"
        _fit(csv_fixture, fit_out)
        mspe_out = tmp_path / "mspe"
        main([
            "mspe", "--survey", str(csv_fixture["survey"]),
            "--census", str(csv_fixture["census"]),
            "--z", str(csv_fixture["z"]), "--seed", "5", "--K", "10", "--B", "4",
            "--grid-step", "0.1", "--grid-lo", "0.1", "--grid-hi", "0.9",
            "--alphas", "0", "--output-dir", str(mspe_out),
        ])
        dir_out = tmp_path / "direct"
        main([
            "direct", "--survey", str(csv_fixture["survey"]),
            "--z", str(csv_fixture["z"]), "--alphas", "0",
            "--output-dir", str(dir_out),
        ])
        diag_out = tmp_path / "diag"
        rc = main([
            "diagnose", "--direct", str(dir_out / "direct.csv"),
            "--model", str(mspe_out / "estimates.csv"),
            "--output-dir", str(diag_out),
        ])
        assert rc == 0
        blob = json.loads((diag_out / "diagnostics.json").read_text())
        assert "0" in blob
        assert "W" in blob["0"] and "correlation" in blob["0"]
        assert (diag_out / "cv_ecdf.csv").exists()
