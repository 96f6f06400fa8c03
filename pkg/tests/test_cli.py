import os
import subprocess
import sys

import numpy as np
import pytest

from stormsynth import arima, cli, pipeline

from conftest import FIXTURE_ARCHIVE, FIXTURE_CONFIG

COMMANDS = {
    "ingest": ["--archive", "--years", "--status", "--out", "--resample"],
    "stats": ["--archive", "--years", "--cell", "--out"],
    "forecast": ["--series", "--order", "--search", "--grid", "--holdout", "--horizon"],
    "cluster": ["--tracks", "--seed", "--k", "--feature-mode", "--seed-mode", "--count"],
    "train": ["--tracks", "--seed", "--epochs", "--learning-rate", "--batch-size"],
    "synthesize": ["--tracks", "--model", "--scaler", "--plan", "--seed", "--mean", "--std"],
    "coverage": ["--tracks", "--archive", "--cell", "--bounds", "--weighting"],
    "compare": ["--historical", "--synthetic", "--cell", "--bounds"],
    "run": ["--config", "--archive", "--out", "--seed", "--synthetic-count"],
}


@pytest.mark.parametrize("command", sorted(COMMANDS))
def test_help_lists_flags(command, capsys):
    assert cli.main([command, "--help"]) == 0
    text = capsys.readouterr().out
    for flag in COMMANDS[command] + ["--config"]:
        assert flag in text


def test_usage_errors_exit_1(capsys):
    assert cli.main(["bogus"]) == 1
    assert cli.main(["cluster", "--tracks", "x.csv"]) == 1  # --seed missing
    assert cli.main([]) == 1
    capsys.readouterr()


def test_missing_input_exits_2(tmp_path, capsys):
    assert cli.main(["ingest", "--archive", str(tmp_path / "absent.txt")]) == 2
    assert "absent.txt" in capsys.readouterr().err


def test_numerical_failure_exits_3(tmp_path, monkeypatch, capsys):
    series = tmp_path / "counts.csv"
    series.write_text("year,count\n" + "".join(f"{1980 + i},{i % 5}\n" for i in range(30)))

    def fail(*args, **kwargs):
        raise arima.ArimaFitError("no convergence", 1.0)
    monkeypatch.setattr(arima, "fit", fail)
    assert cli.main(["forecast", "--series", str(series), "--order", "1,0,0"]) == 3
    capsys.readouterr()


def _chain(tmp_path):
    ingest = tmp_path / "ingest"
    assert cli.main(["ingest", "--archive", str(FIXTURE_ARCHIVE), "--years", "1875:2010",
                     "--resample", "20", "--out", str(ingest)]) == 0
    assert cli.main(["stats", "--archive", str(FIXTURE_ARCHIVE), "--years", "1985:2010",
                     "--out", str(tmp_path / "stats")]) == 0
    return ingest


def test_forecast_writes_ten_values(tmp_path, capsys):
    _chain(tmp_path)
    out = tmp_path / "fc"
    assert cli.main(["forecast", "--series", str(tmp_path / "stats" / "annual_counts.csv"),
                     "--order", "1,1,1", "--out", str(out)]) == 0
    rows = (out / "forecast.csv").read_text().splitlines()
    assert rows[0] == "year,forecast,count"
    assert len(rows) == 11
    assert rows[1].startswith("2011,")
    assert "order = 1,1,1" in (out / "arima_model.txt").read_text()
    capsys.readouterr()


def test_stage_chain_matches_run(tmp_path, capsys):
    ingest = _chain(tmp_path)
    tracks = str(ingest / "training_tracks.csv")
    assert cli.main(["cluster", "--config", str(FIXTURE_CONFIG), "--tracks", tracks,
                     "--seed", "11", "--count", "24", "--out", str(tmp_path / "cl")]) == 0
    assert cli.main(["train", "--config", str(FIXTURE_CONFIG), "--tracks", tracks,
                     "--seed", "11", "--out", str(tmp_path / "ae")]) == 0
    assert cli.main(["synthesize", "--config", str(FIXTURE_CONFIG), "--tracks", tracks,
                     "--model", str(tmp_path / "ae" / "autoencoder.txt"),
                     "--scaler", str(ingest / "scaler.txt"),
                     "--plan", str(tmp_path / "cl" / "seed_plan.csv"),
                     "--seed", "11", "--out", str(tmp_path / "syn")]) == 0
    res = pipeline.run(pipeline.PipelineConfig.from_file(
        FIXTURE_CONFIG, output_dir=str(tmp_path / "run"), synthetic_count=24))
    for stage, name in [("cl", "clusters.csv"), ("cl", "seed_plan.csv"),
                        ("ae", "autoencoder.txt"), ("syn", "synthetic_tracks.csv")]:
        assert (tmp_path / stage / name).read_bytes() == res.artifacts[name].read_bytes(), name
    capsys.readouterr()


def test_run_prints_manifest_and_writes_only_under_out(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(FIXTURE_CONFIG), "--out", str(out)]) == 0
    printed = capsys.readouterr().out.strip()
    assert printed == str(out / "manifest.txt")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["out"]
    assert not (FIXTURE_CONFIG.parent / "fixture_run").exists()


def test_failed_run_writes_nothing_new(tmp_path, capsys):
    out = tmp_path / "out"
    code = cli.main(["run", "--config", str(FIXTURE_CONFIG), "--out", str(out),
                     "--archive", str(tmp_path / "missing.txt")])
    assert code == 2
    assert not out.exists() or not any(out.iterdir())
    assert "parse" in capsys.readouterr().err


def test_ingest_to_stdout(capsys):
    assert cli.main(["ingest", "--archive", str(FIXTURE_ARCHIVE), "--years", "2011:2021"]) == 0
    lines = capsys.readouterr().out.splitlines()
    ids = {ln.split(",")[0] for ln in lines[1:]}
    assert len(ids) == 11


def test_compare_round_trip(tmp_path, capsys):
    grid = tmp_path / "g"
    assert cli.main(["coverage", "--archive", str(FIXTURE_ARCHIVE), "--years", "2011:2021",
                     "--out", str(grid)]) == 0
    csv = str(grid / "coverage.csv")
    assert cli.main(["compare", "--historical", csv, "--synthetic", csv]) == 0
    report = dict(ln.split(" = ") for ln in capsys.readouterr().out.splitlines())
    assert float(report["pearson_r"]) == pytest.approx(1.0)
    assert float(report["nrmse"]) == 0.0


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "stormsynth.cli", "forecast", "--help"],
                          capture_output=True, text=True, env={**os.environ})
    assert proc.returncode == 0 and "--series" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "stormsynth.cli", "nope"],
                          capture_output=True, text=True)
    assert proc.returncode == 1
