# tests/test_cli.py
import json
import os

import pytest

from utils.app import HvsApp
from utils.report import ReportStore

SELECTION_ARTIFACTS = ["run_config.json", "preprocess_log.csv", "hvs_result.json", "selection_detail.csv",
                       "importance.csv", "step1_bars.csv", "step_comparison.csv", "importance_pie.json"]


@pytest.fixture
def app(tmp_path):
    app = HvsApp(env_file=str(tmp_path / "missing.env"),
                 environ={"OUTPUT_DIR": str(tmp_path / "out"), "THREADS": "1", "LOG_LEVEL": "WARNING"})
    app.setup()
    yield app
    app.close_logging()


def _snapshot(directory):
    return {name: (directory / name).read_bytes() for name in sorted(os.listdir(directory))}


def test_commands_are_registered(app):
    assert set(app.commands) == {"bench", "run", "synth", "validate"}


def test_usage_and_unknown_command(app, capsys):
    assert app.run([]) == 2
    assert "commands: bench, run, synth, validate" in capsys.readouterr().out

    assert app.run(["--help"]) == 0
    assert app.run(["fit"]) == 2
    assert 'type=ArgumentParsingError message="unknown command: fit"' in capsys.readouterr().err


def test_missing_required_flag(app, capsys):
    assert app.run(["run", "--hierarchy", "h.json"]) == 2
    assert "error code=2" in capsys.readouterr().err


def test_run_writes_reports(app, tmp_path, input_files):
    panel, hierarchy = input_files
    out = tmp_path / "report"

    assert app.run(["run", "--panel", str(panel), "--hierarchy", str(hierarchy), "--output-dir", str(out)]) == 0

    for name in SELECTION_ARTIFACTS + ["benchmarks.csv", "response_diagnostics.csv"]:
        assert (out / name).is_file(), name

    result = ReportStore.read_json(str(out / "hvs_result.json"))
    assert {"E1_N1", "S1_N2"} <= set(result["data"]["step3"]["selected"])

    importance = ReportStore.read_table(str(out / "importance.csv"))
    assert importance["pct"].sum() == pytest.approx(100.0)

    benchmarks = ReportStore.read_table(str(out / "benchmarks.csv"))
    assert benchmarks["label"].tolist() == ["PCA1", "PCA2", "Stepwise", "Lasso", "HVS"]


def test_run_is_byte_identical(app, tmp_path, input_files):
    panel, hierarchy = input_files
    out = tmp_path / "report"
    argv = ["run", "--panel", str(panel), "--hierarchy", str(hierarchy), "--output-dir", str(out),
            "--validate", "temporal", "--window-years", "3"]

    assert app.run(argv) == 0
    first = _snapshot(out)
    assert "validation_mse.csv" in first

    assert app.run(argv) == 0
    assert _snapshot(out) == first


def test_config_hash_ignores_output_location(app, tmp_path, input_files):
    panel, hierarchy = input_files
    base = ["run", "--panel", str(panel), "--hierarchy", str(hierarchy), "--no-benchmarks", "--no-diagnostics"]

    assert app.run(base + ["--output-dir", str(tmp_path / "a")]) == 0
    assert app.run(base + ["--output-dir", str(tmp_path / "b"), "--threads", "2"]) == 0
    assert app.run(base + ["--output-dir", str(tmp_path / "c"), "--seed", "5"]) == 0

    hashes = [ReportStore.read_json(str(tmp_path / d / "hvs_result.json"))["config_hash"] for d in "abc"]
    assert hashes[0] == hashes[1] != hashes[2]


def test_synth_then_run_from_returns(app, tmp_path, small_spec):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(small_spec.to_dict()))
    inputs = tmp_path / "synth"

    assert app.run(["synth", "--spec", str(spec_path), "--output-dir", str(inputs), "--with-returns"]) == 0
    for name in ("panel.csv", "hierarchy.json", "truth.csv", "spec.json", "returns.csv"):
        assert (inputs / name).is_file()

    out = tmp_path / "report"
    assert app.run(["run", "--panel", str(inputs / "panel.csv"), "--hierarchy", str(inputs / "hierarchy.json"),
                    "--returns", str(inputs / "returns.csv"), "--no-benchmarks", "--output-dir", str(out)]) == 0

    diagnostics = ReportStore.read_table(str(out / "response_diagnostics.csv"))
    assert set(diagnostics["form"]) == {"volatility", "log_volatility"}


def test_synth_rejects_invalid_spec(app, tmp_path, small_spec, capsys):
    spec = small_spec.to_dict()
    spec["noise_sd"] = -1.0
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))

    assert app.run(["synth", "--spec", str(path), "--output-dir", str(tmp_path / "synth")]) == 2
    assert "type=SpecError" in capsys.readouterr().err
    assert not (tmp_path / "synth").exists()


def test_validate_command(app, tmp_path, input_files):
    panel, hierarchy = input_files
    out = tmp_path / "report"

    assert app.run(["validate", "--panel", str(panel), "--hierarchy", str(hierarchy), "--output-dir", str(out),
                    "--design", "temporal", "--window-years", "3", "--wilcoxon"]) == 0

    tests = ReportStore.read_table(str(out / "validation_tests.csv"))
    assert set(tests["method"]) == {"t", "wilcoxon"}
    assert set(tests["design"]) == {"temporal"}
