import configparser

import numpy as np
import pytest

from stormsynth import pipeline
from stormsynth.pipeline import ARTIFACTS, MANIFEST, PipelineConfig, PipelineError

from conftest import FIXTURE_ARCHIVE, FIXTURE_CONFIG


def fixture_config(tmp_path, **overrides):
    return PipelineConfig.from_file(FIXTURE_CONFIG, output_dir=str(tmp_path), **overrides)


@pytest.fixture(scope="module")
def synthetic_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return pipeline.run(fixture_config(out, synthetic_count=24))


def test_every_artifact_and_manifest_written(synthetic_run):
    names = {p.name for p in synthetic_run.output_dir.iterdir()}
    assert names == set(ARTIFACTS) | {MANIFEST}
    manifest = pipeline.read_manifest(synthetic_run.manifest_path)
    for name in ARTIFACTS:
        assert len(manifest[f"artifact.{name}.sha256"]) == 64


def test_counts_agree(synthetic_run):
    manifest = pipeline.read_manifest(synthetic_run.manifest_path)
    clusters = [int(c) for c in manifest["count.cluster_counts"].split(",")]
    assert synthetic_run.synthetic_count == sum(clusters) == 24
    rows = synthetic_run.artifacts["synthetic_tracks.csv"].read_text().splitlines()[1:]
    assert len({r.split(",")[0] for r in rows}) == 24


def test_forecast_total_drives_count_by_default(tmp_path):
    res = pipeline.run(fixture_config(tmp_path))
    manifest = pipeline.read_manifest(res.manifest_path)
    assert res.synthetic_count == res.forecast_total == int(manifest["count.forecast_total"])
    assert sum(int(c) for c in manifest["count.cluster_counts"].split(",")) == res.forecast_total


def test_two_runs_identical_manifests(tmp_path, synthetic_run):
    again = pipeline.run(fixture_config(tmp_path, synthetic_count=24))
    assert again.manifest_path.read_bytes() == synthetic_run.manifest_path.read_bytes()


def test_different_master_seed_changes_synthesis(tmp_path, synthetic_run):
    other = pipeline.run(fixture_config(tmp_path, synthetic_count=24, seed=12))
    a = pipeline.read_manifest(synthetic_run.manifest_path)
    b = pipeline.read_manifest(other.manifest_path)
    assert a["artifact.annual_counts.csv.sha256"] == b["artifact.annual_counts.csv.sha256"]
    assert a["artifact.synthetic_tracks.csv.sha256"] != b["artifact.synthetic_tracks.csv.sha256"]


def test_derive_seed_is_stable_and_label_specific():
    assert pipeline.derive_seed(11, "cluster") == pipeline.derive_seed(11, "cluster")
    labels = ["cluster", "counts", "seeds", "autoencoder", "synthesis"]
    assert len({pipeline.derive_seed(11, lab) for lab in labels}) == len(labels)
    assert 0 <= pipeline.derive_seed(0, "x") < 2 ** 64


def test_config_file_and_overrides():
    cfg = PipelineConfig.from_file(FIXTURE_CONFIG, seed=3)
    assert cfg.seed == 3
    assert cfg.archive == str(FIXTURE_ARCHIVE)
    assert cfg.k == 2 and cfg.arima_order == (1, 1, 1)
    assert cfg.train.epochs == 2 and cfg.train.batch_size == 8
    assert cfg.arima_years == (1985, 2010)
    # unset keys keep their defaults
    assert cfg.train.learning_rate == 1e-3 and cfg.widths == (60, 128, 64, 32, 16)


def test_search_keyword_enables_grid_search():
    cp = configparser.ConfigParser()
    cp.read_string("[arima]\norder = search\ngrid = 2,1,2\n")
    cfg = PipelineConfig.from_parser(cp)
    assert cfg.arima_order is None and cfg.arima_grid == (2, 1, 2)


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(train_years=(1900, 2015), eval_years=(2011, 2021))
    with pytest.raises(ValueError):
        PipelineConfig(feature_mode="4d")
    with pytest.raises(ValueError):
        PipelineConfig(widths=(50, 16))


def test_missing_archive_names_parse_stage(tmp_path):
    cfg = fixture_config(tmp_path / "out", archive=str(tmp_path / "nope.txt"))
    with pytest.raises(PipelineError) as info:
        pipeline.run(cfg)
    assert info.value.stage == "parse"
    assert isinstance(info.value.cause, OSError)


def test_empty_train_era_names_filter_stage(tmp_path):
    cfg = fixture_config(tmp_path, train_years=(1800, 1810), eval_years=(2011, 2021))
    with pytest.raises(PipelineError) as info:
        pipeline.run(cfg)
    assert info.value.stage == "filter"


def test_manifest_reports_metrics(synthetic_run):
    manifest = pipeline.read_manifest(synthetic_run.manifest_path)
    assert float(manifest["report.nrmse"]) == pytest.approx(synthetic_run.report.nrmse)
    assert np.isfinite(synthetic_run.report.pearson_r)


def test_inline_comments_in_config(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("[arima]\norder = search   ; or p,d,q\n[cluster]\nk = 3  # groups\n")
    cfg = PipelineConfig.from_file(path)
    assert cfg.arima_order is None and cfg.k == 3
