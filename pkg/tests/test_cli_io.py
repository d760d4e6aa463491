import json
import subprocess
import sys

import numpy as np
import pytest

from cvselect import cli, io
from cvselect.criterion import select_model
from cvselect.errors import ConfigError, DataError
from cvselect.models import enumerate_models
from cvselect.schemes import disjoint_scheme


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(repr(float(v)) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def planted(tmp_path):
    rng = np.random.default_rng(42)
    n = 60
    x = rng.standard_normal((n, 3))
    X = np.column_stack([np.ones(n), x])
    mu = X[:, :2] @ [1.0, 2.0]
    y = mu + rng.standard_normal(n)
    data = write_csv(
        tmp_path / "data.csv", ["y", "one", "a", "b", "c"], np.column_stack([y, X])
    )
    mu_path = write_csv(tmp_path / "mu.csv", ["mu"], mu[:, None])
    return data, mu_path, X, y


class TestLoadCsv:
    def test_example(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("y,x1\n1,1\n2,1\n3,1", encoding="utf-8")
        d = io.load_csv(p, "y")
        np.testing.assert_array_equal(d.response, [1, 2, 3])
        np.testing.assert_array_equal(d.predictors, [[1], [1], [1]])
        assert d.columns == ("x1",)

    def test_missing_column(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("y,x1\n1,1\n", encoding="utf-8")
        with pytest.raises(DataError, match="not found"):
            io.load_csv(p, "z")

    @pytest.mark.parametrize("cell", ["NaN", "", "NA"])
    def test_missing_value(self, tmp_path, cell):
        p = tmp_path / "d.csv"
        p.write_text(f"y,x1\n1,1\n2,{cell}\n", encoding="utf-8")
        with pytest.raises(DataError, match="missing value at line 3, column 'x1'"):
            io.load_csv(p, "y")

    def test_parse_error_location(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("y,x1\n1,abc\n", encoding="utf-8")
        with pytest.raises(DataError, match="line 2, column 'x1'"):
            io.load_csv(p, "y")

    def test_round_trip_17_digits(self, tmp_path):
        vals = np.random.default_rng(0).standard_normal((5, 2)) * 1e-7
        p = write_csv(tmp_path / "d.csv", ["y", "x"], vals)
        d = io.load_csv(p, "y")
        back = json.loads(io.dumps_report({"y": d.response, "x": d.predictors}))
        assert back["schema_version"] == 1
        np.testing.assert_array_equal(back["y"], vals[:, 0])
        np.testing.assert_array_equal(np.asarray(back["x"])[:, 0], vals[:, 1])
        for v in vals.ravel():
            assert float(f"{v:.17g}") == v

    def test_non_finite_serialized_as_null(self):
        body = json.loads(io.dumps_report({"a": float("nan"), "b": [np.inf, 1.0]}))
        assert body["a"] is None and body["b"] == [None, 1.0]

    def test_config_errors(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError, match="invalid JSON"):
            io.load_config(p)
        with pytest.raises(ConfigError):
            io.load_config(tmp_path / "missing.json")


def run_cli(*args):
    return cli.main([str(a) for a in args])


class TestSelectCommand:
    def test_known_matches_library(self, planted, tmp_path, capsys):
        data, _, X, y = planted
        out = tmp_path / "sel.json"
        code = run_cli("select", "--data", data, "--response", "y", "--train-size", 12,
                       "--sigma2", 1.0, "--out", out)
        assert code == 0
        rep = json.loads(out.read_text())
        lib = select_model(enumerate_models("nested", 4), X, y, disjoint_scheme(60, 12), "known-sigma", 1.0)
        assert rep["selection"]["selected"] == list(lib.selected.columns)
        assert rep["selection"]["variant"] == "known-sigma"
        assert rep["schema_version"] == 1
        assert len(rep["fitted"]) == 60
        assert rep["exact_density_offset"] is None
        assert "selected" in capsys.readouterr().out

    def test_unknown_when_sigma_omitted(self, planted, tmp_path):
        data, *_ = planted
        out = tmp_path / "sel.json"
        assert run_cli("select", "--data", data, "--response", "y", "--models", "all:2",
                       "--train-size", 10, "--out", out) == 0
        rep = json.loads(out.read_text())
        assert rep["selection"]["variant"] == "unknown-sigma"
        assert len(rep["exact_density_offset"]) == 10

    def test_model_file_and_rotation(self, planted, tmp_path):
        data, *_ = planted
        models = tmp_path / "models.txt"
        models.write_text("1\n1,2  # planted\n1 2 3\n", encoding="utf-8")
        out = tmp_path / "sel.json"
        assert run_cli("select", "--data", data, "--response", "y", "--models", models,
                       "--scheme", "rotation", "--train-size", 8, "--out", out) == 0
        rep = json.loads(out.read_text())
        assert rep["scheme"]["kind"] == "rotation" and rep["scheme"]["r"] == 15

    def test_divisibility_exit_2(self, planted, capsys):
        data, *_ = planted
        assert run_cli("select", "--data", data, "--response", "y", "--train-size", 7) == 2
        assert "divide" in capsys.readouterr().err

    def test_train_size_margin_exit_2(self, planted, capsys):
        data, *_ = planted
        assert run_cli("select", "--data", data, "--response", "y", "--train-size", 4) == 2
        assert "largest model size + 1" in capsys.readouterr().err

    def test_missing_file_exit_2(self, tmp_path):
        assert run_cli("select", "--data", tmp_path / "nope.csv", "--response", "y") == 2

    def test_bad_flag_exit_2(self):
        assert run_cli("select", "--bogus") == 2

    def test_all_models_failed_exit_3(self, tmp_path, capsys):
        n = 12
        rows = [[float(i), 0.0 if i < 4 else float(i)] for i in range(n)]
        data = write_csv(tmp_path / "d.csv", ["y", "x"], rows)
        models = tmp_path / "m.txt"
        models.write_text("1\n", encoding="utf-8")
        with pytest.warns(RuntimeWarning):
            code = run_cli("select", "--data", data, "--response", "y", "--models", models,
                           "--train-size", 4, "--sigma2", 1)
        assert code == 3
        assert "computation failed" in capsys.readouterr().err


class TestDiagnoseCommand:
    def test_with_truth(self, planted, tmp_path):
        data, mu, *_ = planted
        out = tmp_path / "diag.json"
        assert run_cli("diagnose", "--data", data, "--response", "y", "--train-size", 12,
                       "--truth-mu", mu, "--sigma2", 1, "--out", out) == 0
        vals = json.loads(out.read_text())["conditions"]["values"]
        for key in ("sum_inverse_risk", "dimension_lambda_risk_ratio", "a_in_risk_ratio_max",
                    "min_bias", "train_fraction_log_n", "a_in_mean_max"):
            assert key in vals

    def test_without_truth(self, planted, tmp_path):
        data, *_ = planted
        out = tmp_path / "diag.json"
        assert run_cli("diagnose", "--data", data, "--response", "y", "--train-size", 12,
                       "--out", out) == 0
        vals = json.loads(out.read_text())["conditions"]["values"]
        assert "sum_inverse_risk" not in vals
        assert "lambda_n" in vals and "dimension_lambda_over_n" in vals

    def test_estimated_sigma_and_m(self, planted, tmp_path):
        data, mu, *_ = planted
        outs = []
        for m in (2, 3):
            out = tmp_path / f"diag{m}.json"
            assert run_cli("diagnose", "--data", data, "--response", "y", "--train-size", 12,
                           "--truth-mu", mu, "--m", m, "--out", out) == 0
            outs.append(json.loads(out.read_text()))
        assert outs[0]["sigma2_used"] > 0
        a, b = outs[0]["conditions"]["values"], outs[1]["conditions"]["values"]
        assert {k for k in a if a[k] != b[k]} <= {"sum_inverse_risk", "sum_inverse_risk_incorrect",
                                                   "sum_inverse_lambda_dimension_gap",
                                                   "sum_inverse_dimension_correct"}


SIM_CONFIG = {
    "n_grid": [60],
    "replications": 1,
    "seed": 9,
    "design": {"id": "equispaced-polynomial", "params": {"p": 3}},
    "truth": {"id": "smooth-nonlinear"},
    "errors": {"sigma": 1.0},
}


class TestSimulateCommand:
    def _run(self, tmp_path, cfg, name="out"):
        cpath = tmp_path / f"{name}.json"
        cpath.write_text(json.dumps(cfg), encoding="utf-8")
        return run_cli("simulate", "--config", cpath, "--out", tmp_path / name, "--threads", 1)

    def test_minimal(self, tmp_path):
        assert self._run(tmp_path, SIM_CONFIG) == 0
        runs = (tmp_path / "out" / "runs.csv").read_text().splitlines()
        summary = (tmp_path / "out" / "summary.csv").read_text().splitlines()
        assert runs[0] == "n,rep,ratio,selected,oracle,correct_selected"
        assert len(runs) == 2 and len(summary) == 2
        assert runs[1].endswith(",NA")
        assert summary[1].split(",")[-1] == "NA"
        rep = json.loads((tmp_path / "out" / "report.json").read_text())
        assert rep["config"]["seed"] == 9 and rep["schema_version"] == 1

    def test_model_true_frequency(self, tmp_path):
        cfg = dict(SIM_CONFIG, truth={"id": "linear-in-subset", "params": {"columns": [1, 2]}})
        assert self._run(tmp_path, cfg) == 0
        summary = (tmp_path / "out" / "summary.csv").read_text().splitlines()
        assert summary[1].split(",")[-1] in ("0.0", "1.0")

    def test_byte_identical(self, tmp_path):
        cfg = dict(SIM_CONFIG, replications=5)
        assert self._run(tmp_path, cfg, "a") == 0
        assert self._run(tmp_path, cfg, "b") == 0
        for name in ("runs.csv", "summary.csv", "report.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_schema_violation(self, tmp_path, capsys):
        cfg = dict(SIM_CONFIG, errors={"sigma": "big"})
        assert self._run(tmp_path, cfg) == 2
        assert "errors.sigma" in capsys.readouterr().err

    def test_threads_env_override(self, monkeypatch):
        monkeypatch.setenv("CVSELECT_THREADS", "3")
        assert cli.resolve_threads(8) == 3
        monkeypatch.delenv("CVSELECT_THREADS")
        assert cli.resolve_threads(8) == 8
        with pytest.raises(ConfigError):
            cli.resolve_threads(0)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "cvselect", "--version"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "cvselect" in res.stdout
