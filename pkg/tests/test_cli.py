import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from copula_prior import cli
from copula_prior.experiments import design, generate
from copula_prior.data import write_csv


def run_cli(*args):
    return cli.main([str(a) for a in args])


def load(path):
    return json.loads(path.read_text())


def strip_timing(payload):
    payload = dict(payload)
    payload.pop("timing")
    return payload


@pytest.fixture
def ex1_csv(tmp_path):
    train, _, _ = generate(design("ex1"), 3)
    path = tmp_path / "train.csv"
    write_csv(train, path)
    return path


class TestCommands:
    def test_fit(self, ex1_csv, tmp_path, capsys):
        out = tmp_path / "fit"
        assert run_cli("fit", "--data", ex1_csv, "--family", "gauss-copula", "--lambda", 50, "--out", out) == 0
        res = load(out / "fit.json")["result"]
        assert len(res["fit"]["coefficients"]) == 8
        assert res["n"] == 20 and res["p"] == 8
        summary = json.loads(capsys.readouterr().out.strip())
        assert summary["command"] == "fit"

    def test_fit_requires_lambda(self, ex1_csv, tmp_path):
        assert run_cli("fit", "--data", ex1_csv, "--out", tmp_path) == 2

    def test_cv_and_path(self, ex1_csv, tmp_path):
        out = tmp_path / "cv"
        assert run_cli("cv", "--data", ex1_csv, "--k", 5, "--grid-count", 8, "--out", out) == 0
        res = load(out / "cv.json")["result"]
        assert res["tuned"]["lambda_min"] in res["cv"]["lambda_grid"]
        assert (out / "cv_curve.csv").read_text().startswith("lambda,mean_loss,se_loss")
        # the zero threshold of the grid is exact for the lasso prior
        assert run_cli("path", "--data", ex1_csv, "--family", "lasso", "--grid-count", 6, "--out", out) == 0
        rows = list(csv.DictReader((out / "path.csv").open()))
        assert len(rows) == 6 and rows[0]["n_selected"] == "0"

    def test_simulate_then_fit(self, tmp_path):
        out = tmp_path / "sim"
        assert run_cli("simulate", "--design", "ex2", "--seed", 4, "--out", out) == 0
        res = load(out / "simulate.json")["result"]
        assert res["files"] == ["ex2_test.csv", "ex2_train.csv", "ex2_valid.csv"]
        assert run_cli("fit", "--data", out / "ex2_train.csv", "--lambda", 10, "--family", "lasso",
                       "--out", out) == 0

    def test_bench(self, tmp_path):
        out = tmp_path / "bench"
        assert run_cli("bench", "--design", "ex1", "--reps", 2, "--methods", "lasso,gauss",
                       "--grid-count", 6, "--seed", 7, "--out", out) == 0
        rows = list(csv.DictReader((out / "bench.csv").open()))
        assert len(rows) == 4
        summary = load(out / "bench.json")
        assert set(summary["result"]["table"]["ex1"]) == {"lasso", "gauss-copula"}
        assert "benchmark_seconds" in summary["timing"]

    def test_contour(self, tmp_path):
        out = tmp_path / "contour"
        assert run_cli("contour", "--family", "t-copula", "--nu", 10, "--rho", 0.5, "--lambda", 1,
                       "--resolution", 21, "--out", out) == 0
        lines = (out / "contour.csv").read_text().splitlines()
        assert lines[0] == "omega1,omega2,log_density" and len(lines) == 21 * 21 + 1
        vals = np.loadtxt(out / "contour.csv", delimiter=",", skiprows=1)
        dens = vals[:, 2].reshape(21, 21)
        np.testing.assert_allclose(dens, dens[::-1, ::-1], rtol=1e-12)
        # positive correlation favours same-sign coefficients
        assert dens[15, 15] > dens[15, 5]

    def test_resample(self, ex1_csv, tmp_path):
        out = tmp_path / "rs"
        assert run_cli("resample-fit", "--data", ex1_csv, "--lambda", 30, "--m", 15, "--M", 4,
                       "--dump-solutions", "--out", out) == 0
        res = load(out / "resample_fit.json")["result"]
        assert res["M"] == 4 and res["with_replacement"] and not res["lambda_tuned"]
        assert len((out / "resample_solutions.csv").read_text().splitlines()) == 5

    def test_resample_full_matches_fit(self, ex1_csv, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_cli("resample-fit", "--data", ex1_csv, "--lambda", 30, "--without-replacement",
                       "--out", a) == 0
        assert run_cli("fit", "--data", ex1_csv, "--lambda", 30, "--out", b) == 0
        ra, rb = load(a / "resample_fit.json")["result"], load(b / "fit.json")["result"]
        assert ra["coefficients"] == rb["fit"]["coefficients"]

    def test_verify_theory(self, tmp_path):
        out = tmp_path / "v"
        assert run_cli("verify-theory", "--runs", 1, "--lambda", 200, "--out", out) == 0
        res = load(out / "verify_theory.json")["result"]
        assert res["assumptions"]["concavity_violations"] == 0
        assert res["pairs_per_run"] == 30

    def test_trace(self, ex1_csv, tmp_path):
        tr = tmp_path / "trace.jsonl"
        assert run_cli("fit", "--data", ex1_csv, "--lambda", 40, "--trace", tr, "--out", tmp_path) == 0
        assert all("objective" in json.loads(line) for line in tr.read_text().splitlines())


class TestErrors:
    def test_missing_file_is_data_error(self, tmp_path, capsys):
        assert run_cli("fit", "--data", tmp_path / "nope.csv", "--lambda", 1, "--out", tmp_path) == 3
        err = json.loads(capsys.readouterr().err)
        assert err["exit_code"] == 3 and "does not exist" in err["message"]

    def test_parse_error_is_data_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,bmi,y\n1,2,3\n4,abc,5\n")
        assert run_cli("fit", "--data", bad, "--lambda", 1, "--out", tmp_path) == 3
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "ParseError" and "bmi" in err["message"]

    def test_bad_parameter_is_usage_error(self, ex1_csv, tmp_path):
        assert run_cli("fit", "--data", ex1_csv, "--lambda", -1, "--out", tmp_path) == 2
        assert run_cli("simulate", "--design", "ex7", "--out", tmp_path) == 2

    def test_argparse_usage(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run_cli("frobnicate")
        assert exc.value.code == 2

    def test_no_partial_output_on_failure(self, tmp_path):
        out = tmp_path / "empty"
        run_cli("fit", "--data", tmp_path / "missing.csv", "--lambda", 1, "--out", out)
        assert not (out / "fit.json").exists()


class TestDeterminism:
    def test_identical_modulo_timing(self, ex1_csv, tmp_path):
        for d in ("a", "b"):
            assert run_cli("cv", "--data", ex1_csv, "--family", "t-copula", "--k", 4, "--grid-count", 5,
                           "--seed", 9, "--out", tmp_path / d) == 0
        a, b = load(tmp_path / "a" / "cv.json"), load(tmp_path / "b" / "cv.json")
        assert strip_timing(a) == strip_timing(b)
        assert (tmp_path / "a" / "cv_curve.csv").read_bytes() == (tmp_path / "b" / "cv_curve.csv").read_bytes()

    def test_seed_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.SEED_ENV, "31")
        assert run_cli("simulate", "--out", tmp_path) == 0
        assert load(tmp_path / "simulate.json")["seeds"]["run"] == 31
        monkeypatch.setenv(cli.SEED_ENV, "abc")
        assert run_cli("simulate", "--out", tmp_path) == 2

    def test_selected_threshold(self, ex1_csv, tmp_path):
        assert run_cli("fit", "--data", ex1_csv, "--lambda", 20, "--out", tmp_path) == 0
        fit = load(tmp_path / "fit.json")["result"]["fit"]
        std = fit["coefficients_standardized"]
        assert sorted(fit["selected_features"]) == sorted(k for k, v in std.items() if abs(v) > 1e-6)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "copula_prior", "contour", "--family", "lasso", "--lambda", "1",
                           "--resolution", "5", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "contour.csv").exists()
