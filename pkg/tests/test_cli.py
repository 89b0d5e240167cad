"""Tests for the mobility-lab command line."""

import json

import pandas as pd
import pytest

from mobility_lab.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main

PIPELINE = """\
seed: 3
model:
  lam: 0.6
  rho: 0.6
  sigma_eps2: 1.0
  generations: 4
  feedback:
    kind: linear
    intercept: 0.3
    slope: 0.2
population:
  n_per_region_cohort: 200
  regions: [madrid, ceuta]
  cohorts: {first: 1950, last: 1954}
  leave_home:
    hazards: {"18-34": 0.1}
observation:
  - measure_age: 30
  - measure_age: 24
    coresident_only: true
bias_lab:
  ages: [22, 24]
  benchmark_age: 26
  survey_years: [1976]
  periods: [[1976, 1976]]
targets:
  - metric: simulate.population_rows
    value: 2000
  - metric: simulate.rho_first
    max: 0.1
"""

REGRESS = """\
seed: 4
panel_dgp:
  kind: vicious_cycle
  n_regions: 30
  n_periods: 6
regressions:
  - dependent: igc
    regressors: [father_sd, am]
    estimator: split_iv
targets:
  - metric: regress.mediation_share
    min: -100
    max: 100
  - metric: regress.no_such_metric
    value: 1.0
"""


@pytest.fixture
def pipeline_config(tmp_path):
    """Write the small pipeline config."""
    path = tmp_path / "pipeline.yaml"
    path.write_text(PIPELINE, encoding="utf-8")
    return path


@pytest.fixture
def regress_config(tmp_path):
    """Write a config whose regressions run on a synthetic panel."""
    path = tmp_path / "regress.yaml"
    path.write_text(REGRESS, encoding="utf-8")
    return path


def _manifest(out):
    return json.loads((out / "manifest.json").read_text(encoding="utf-8"))


def _report(out):
    return json.loads((out / "report.json").read_text(encoding="utf-8"))


def test_report_on_fresh_directory(tmp_path, capsys):
    """Test an empty output directory has nothing to report."""
    assert main(["report", "--out", str(tmp_path)]) == EXIT_OK
    assert "nothing to report" in capsys.readouterr().out


def test_simulate_with_defaults(tmp_path, capsys):
    """Test the default dynamics run writes moments and a manifest."""
    out = tmp_path / "run"
    assert main(["simulate", "--out", str(out)]) == EXIT_OK
    moments = pd.read_csv(out / "moments.csv")
    assert len(moments) == 6
    manifest = _manifest(out)
    assert set(manifest["commands"]) == {"simulate"}
    assert "moments.csv" in manifest["commands"]["simulate"]["outputs"]
    assert "sha256=" in capsys.readouterr().out


def test_invalid_config_exit_code(tmp_path):
    """Test an unknown key is a validation failure."""
    path = tmp_path / "bad.yaml"
    path.write_text("seed: 1\nmodle: {}\n", encoding="utf-8")
    assert main(["simulate", "--config", str(path)]) == EXIT_VALIDATION


def test_invalid_threads_exit_code(tmp_path):
    """Test a non-positive worker count is rejected."""
    assert main(["simulate", "--out", str(tmp_path), "--threads", "0"]) == (
        EXIT_VALIDATION
    )


def test_missing_config_file_exit_code(tmp_path):
    """Test an unreadable config is a runtime failure."""
    missing = tmp_path / "absent.yaml"
    assert main(["simulate", "--config", str(missing)]) == EXIT_RUNTIME


def test_estimate_without_microdata_source(tmp_path):
    """Test estimate needs microdata or a population section."""
    assert main(["estimate", "--out", str(tmp_path)]) == EXIT_VALIDATION


def test_pipeline_is_deterministic(pipeline_config, tmp_path):
    """Test equal seeds give identical files whatever the thread count."""
    first, second = tmp_path / "first", tmp_path / "second"
    args = ["simulate", "--config", str(pipeline_config)]
    assert main([*args, "--out", str(first)]) == EXIT_OK
    assert main([*args, "--out", str(second), "--threads", "3"]) == EXIT_OK
    for name in ("moments.csv", "microdata.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    assert _manifest(first) == _manifest(second)


def test_full_pipeline_and_report(pipeline_config, tmp_path):
    """Test every microdata stage records outputs and the report checks targets."""
    out = tmp_path / "run"
    common = ["--config", str(pipeline_config), "--out", str(out)]
    assert main(["simulate", *common]) == EXIT_OK
    assert main(["estimate", *common, "--by-sex"]) == EXIT_OK
    assert main(["bias-lab", *common]) == EXIT_OK
    assert main(["panel", *common]) == EXIT_OK

    manifest = _manifest(out)
    assert set(manifest["commands"]) == {"simulate", "estimate", "bias-lab", "panel"}
    assert len(manifest["config_digest"]) == 64
    assert manifest["seed"] == 3
    assert manifest["commands"]["simulate"]["metrics"]["population_rows"] == 2000

    trends = pd.read_csv(out / "national_trends.csv")
    assert set(trends["sex"]) == {"all", "male", "female"}
    assert set(trends["measure_age"]) == {24, 30}
    assert "igc_ma3" in trends.columns
    trends_by_age = pd.read_csv(out / "parallel_trends.csv")
    assert set(trends_by_age["age"]) == {22, 24}
    assert {"rho", "rho_se", "gamma", "gamma_se"} <= set(trends_by_age.columns)
    shares = pd.read_csv(out / "coresidence_shares.csv")
    assert len(shares) == 6
    assert set(shares["sex"]) == {"all", "male", "female"}
    bias_outputs = manifest["commands"]["bias-lab"]["outputs"]
    for name in ("smooth_cohorts.csv", "bias_reduction.csv", "parallel_trends.csv"):
        assert name in bias_outputs
    panel = pd.read_csv(out / "panel.csv")
    assert set(panel["region_id"]) == {"ceuta", "madrid"}
    assert (panel["n"] >= 50).all()

    assert main(["report", *common]) == EXIT_OK
    report = _report(out)
    statuses = {c["metric"]: c["status"] for c in report["checks"]}
    assert statuses == {
        "simulate.population_rows": "pass",
        "simulate.rho_first": "fail",
    }
    assert {c["source"] for c in report["checks"]} == {"config"}
    assert report["stale"] == []
    assert report["missing"] == []


def test_regress_on_synthetic_panel(regress_config, tmp_path):
    """Test regress falls back to the configured synthetic panel."""
    out = tmp_path / "run"
    common = ["--config", str(regress_config), "--out", str(out)]
    assert main(["regress", *common]) == EXIT_OK
    records = json.loads((out / "regressions.json").read_text(encoding="utf-8"))
    first = records[0]
    assert first["estimator"] == "split_iv"
    assert first["instrumented"] == ["father_sd", "am"]
    assert set(first["coefficients"]) == {"father_sd", "am"}
    metrics = _manifest(out)["commands"]["regress"]["metrics"]
    assert "spec0_split_iv_am" in metrics
    assert "mediation_share" in metrics
    assert "persistence_gap_am" in metrics

    assert main(["report", *common]) == EXIT_OK
    statuses = {c["metric"]: c["status"] for c in _report(out)["checks"]}
    assert statuses["regress.mediation_share"] == "pass"
    assert statuses["regress.no_such_metric"] == "missing"


def test_report_flags_stale_and_missing_files(regress_config, tmp_path):
    """Test tampered outputs are stale and deleted ones fail the report."""
    out = tmp_path / "run"
    common = ["--config", str(regress_config), "--out", str(out)]
    assert main(["regress", *common]) == EXIT_OK

    with (out / "regressions.txt").open("a", encoding="utf-8") as handle:
        handle.write("edited\n")
    assert main(["report", *common]) == EXIT_OK
    assert _report(out)["stale"] == ["regressions.txt"]

    (out / "regressions.json").unlink()
    assert main(["report", *common]) == EXIT_RUNTIME
    assert _report(out)["missing"] == ["regressions.json"]


def test_report_uses_calibrated_targets_when_none_declared(tmp_path):
    """Test a config without targets is checked against the calibrated ones."""
    path = tmp_path / "untargeted.yaml"
    path.write_text(REGRESS.split("targets:")[0], encoding="utf-8")
    out = tmp_path / "run"
    common = ["--config", str(path), "--out", str(out)]
    assert main(["regress", *common]) == EXIT_OK
    assert _manifest(out)["targets"] == []

    assert main(["report", *common]) == EXIT_OK
    checks = _report(out)["checks"]
    assert [c["metric"] for c in checks] == ["regress.mediation_share"]
    assert checks[0]["source"] == "default"
    assert checks[0]["status"] in {"pass", "fail"}
