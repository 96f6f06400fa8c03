"""
End-to-end experiment: learn from one era, synthesize the next, compare.

Stages, in order::

    parse -> filter -> stats -> prepare -> forecast -> cluster -> plan
          -> train -> synthesize -> coverage -> compare

Every stage writes its products to the output directory. A manifest records
the configuration, the derived seeds, a sha-256 digest of every artifact and
the comparison metrics. All randomness is derived from one master seed by
labelled hashing, so adding a stage never shifts another stage's stream.
"""

from __future__ import annotations

import configparser
import hashlib
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import arima, autoenc, cluster, coverage, hurdat2, stats, trackprep

LOGGER = logging.getLogger(__name__)

ARTIFACTS = (
    "storms_train.csv",
    "annual_counts.csv",
    "monthly_counts.csv",
    "start_density.csv",
    "arima_model.txt",
    "forecast.csv",
    "scaler.txt",
    "training_tracks.csv",
    "clusters.csv",
    "seed_plan.csv",
    "autoencoder.txt",
    "loss_history.csv",
    "synthetic_tracks.csv",
    "coverage_historical.csv",
    "coverage_synthetic.csv",
    "comparison.txt",
)
MANIFEST = "manifest.txt"


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


def derive_seed(master: int, label: str) -> int:
    digest = hashlib.sha256(f"{master}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _years(text: str) -> tuple[int, int]:
    lo, _, hi = str(text).partition(":")
    return int(lo), int(hi or lo)


@dataclass(frozen=True)
class PipelineConfig:
    archive: str = "hurdat2.txt"
    output_dir: str = "run_output"
    seed: int = 0
    statuses: tuple = ("HU",)
    train_years: tuple = (1875, 2010)
    eval_years: tuple = (2011, 2021)
    arima_years: tuple = (1975, 2010)
    # None means grid search over arima_grid
    arima_order: Optional[tuple] = (4, 1, 1)
    arima_grid: tuple = (6, 2, 6)
    arima_holdout: int = 10
    synthetic_count: Optional[int] = None
    k: int = 4
    feature_mode: str = "2d"
    seed_mode: str = "uniform"
    n_points: int = trackprep.N_POINTS
    train: autoenc.TrainConfig = field(default_factory=autoenc.TrainConfig)
    widths: tuple = (60, 128, 64, 32, 16)
    perturbation: autoenc.PerturbationConfig = field(default_factory=autoenc.PerturbationConfig)
    coverage_cell: float = 0.5
    coverage_bounds: tuple = coverage.ATLANTIC_BOUNDS
    start_cell: float = 5.0

    def __post_init__(self):
        (a, b), (c, d) = self.train_years, self.eval_years
        if a > b or c > d:
            raise ValueError("era bounds must be ordered")
        if not b < c:
            raise ValueError("train era must end before the eval era starts")
        if self.feature_mode not in ("2d", "3d"):
            raise ValueError("feature_mode must be 2d or 3d")
        if self.widths[0] != self.n_points * trackprep.N_FEATURES:
            raise ValueError(f"input width {self.widths[0]} does not match "
                             f"{self.n_points} points x {trackprep.N_FEATURES} features")

    @classmethod
    def from_file(cls, path: Union[str, Path], **overrides) -> "PipelineConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        with open(path) as fh:
            parser.read_file(fh)
        cfg = cls.from_parser(parser)
        base = Path(path).parent
        updates = {}
        if not Path(cfg.archive).is_absolute() and cfg.archive != "-":
            updates["archive"] = str(base / cfg.archive)
        if not Path(cfg.output_dir).is_absolute():
            updates["output_dir"] = str(base / cfg.output_dir)
        updates.update({k: v for k, v in overrides.items() if v is not None})
        return replace(cfg, **updates)

    @classmethod
    def from_parser(cls, cp: configparser.ConfigParser) -> "PipelineConfig":
        """Build from INI sections ``run``, ``eras``, ``arima``, ``cluster``,
        ``autoencoder``, ``perturbation`` and ``grids``; missing keys keep defaults."""
        def get(section, key, conv=str):
            if cp.has_option(section, key):
                return conv(cp.get(section, key))
            return None

        def ints(text):
            return tuple(int(v) for v in text.split(","))

        kw = dict(
            archive=get("run", "archive"),
            output_dir=get("run", "output_dir"),
            seed=get("run", "seed", int),
            statuses=get("run", "statuses", lambda s: tuple(v.strip() for v in s.split(","))),
            synthetic_count=get("run", "synthetic_count", int),
            train_years=get("eras", "train", _years),
            eval_years=get("eras", "eval", _years),
            arima_years=get("eras", "arima", _years),
            arima_grid=get("arima", "grid", ints),
            arima_holdout=get("arima", "holdout", int),
            k=get("cluster", "k", int),
            feature_mode=get("cluster", "feature_mode"),
            seed_mode=get("cluster", "seed_mode"),
            n_points=get("autoencoder", "n_points", int),
            widths=get("autoencoder", "widths", ints),
            coverage_cell=get("grids", "coverage_cell", float),
            coverage_bounds=get("grids", "coverage_bounds",
                                lambda s: tuple(float(v) for v in s.split(","))),
            start_cell=get("grids", "start_cell", float),
        )
        kw = {k: v for k, v in kw.items() if v is not None}
        order = get("arima", "order")
        if order is not None:
            kw["arima_order"] = None if order.strip() == "search" else ints(order)

        train_kw = {}
        for f in fields(autoenc.TrainConfig):
            val = get("autoencoder", f.name, type(f.default))
            if val is not None:
                train_kw[f.name] = val
        pert_kw = {}
        for f in fields(autoenc.PerturbationConfig):
            conv = (lambda s: s.strip().lower() in ("1", "true", "yes")) if f.type in (bool, "bool") \
                else type(f.default)
            val = get("perturbation", f.name, conv)
            if val is not None:
                pert_kw[f.name] = val
        cfg = cls(**kw)
        return replace(cfg, train=replace(cfg.train, **train_kw),
                       perturbation=replace(cfg.perturbation, **pert_kw))

    def to_items(self) -> list[tuple[str, str]]:
        """Flat, sorted key/value pairs for the manifest."""
        out = []
        for f in fields(self):
            val = getattr(self, f.name)
            if f.name in ("train", "perturbation"):
                for g in fields(val):
                    out.append((f"{f.name}.{g.name}", repr(getattr(val, g.name))))
            elif f.name in ("archive", "output_dir"):
                continue
            else:
                out.append((f.name, repr(val)))
        return sorted(out)


@dataclass
class RunResult:
    output_dir: Path
    manifest_path: Path
    seeds: dict
    forecast_total: int
    synthetic_count: int
    report: coverage.ComparisonReport
    artifacts: dict


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write(out: Path, name: str, writer) -> Path:
    path = out / name
    with open(path, "w", newline="") as fh:
        writer(fh)
    return path


def run(config: PipelineConfig) -> RunResult:
    """Execute every stage and write artifacts plus ``manifest.txt``.

    Raises
    ------
    PipelineError
        Naming the stage that failed. Artifacts written by earlier stages are
        left in place.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = {label: derive_seed(config.seed, label)
             for label in ("cluster", "counts", "seeds", "autoencoder", "synthesis")}
    stage = "parse"
    try:
        storms = hurdat2.read_archive(config.archive)
        archive_digest = _sha256(Path(config.archive)) if config.archive != "-" else ""

        stage = "filter"
        train_storms = hurdat2.filter_hurricanes(storms, *config.train_years, config.statuses)
        eval_storms = hurdat2.filter_hurricanes(storms, *config.eval_years, config.statuses)
        if not train_storms:
            raise ValueError(f"no storms in train era {config.train_years}")
        LOGGER.info("%d train storms, %d eval storms", len(train_storms), len(eval_storms))
        _write(out, "storms_train.csv", lambda fh: hurdat2.write_storm_summary(train_storms, fh))

        stage = "stats"
        annual = stats.annual_counts(train_storms, *config.train_years)
        _write(out, "annual_counts.csv", lambda fh: stats.write_annual_csv(annual, fh))
        _write(out, "monthly_counts.csv",
               lambda fh: stats.write_monthly_csv(stats.monthly_histogram(train_storms), fh))
        density = stats.start_point_density(train_storms, config.start_cell)
        _write(out, "start_density.csv", lambda fh: stats.write_density_csv(density, fh))

        stage = "prepare"
        tracks, scaler, _ = trackprep.prepare_corpus(train_storms, config.n_points)
        (out / "scaler.txt").write_text(scaler.to_text())
        _write(out, "training_tracks.csv", lambda fh: trackprep.write_tracks_csv(tracks, fh))

        stage = "forecast"
        arima_storms = hurdat2.filter_hurricanes(storms, *config.arima_years, config.statuses)
        series = stats.annual_counts(arima_storms, *config.arima_years).counts.astype(float)
        if config.arima_order is None:
            order = arima.grid_search(series, *config.arima_grid, config.arima_holdout,
                                      reference=arima.ArimaOrder(4, 1, 1))
        else:
            order = arima.ArimaOrder(*config.arima_order)
        model = arima.fit(series, order)
        horizon = config.eval_years[1] - config.eval_years[0] + 1
        raw_fc = arima.forecast(model, horizon)
        counts_fc = arima.forecast_counts(model, horizon)
        forecast_total = int(counts_fc.sum())
        (out / "arima_model.txt").write_text(model.to_text())

        def write_forecast(fh):
            fh.write("year,forecast,count\n")
            for i, (v, c) in enumerate(zip(raw_fc, counts_fc)):
                fh.write(f"{config.eval_years[0] + i},{float(v)!r},{int(c)}\n")
        _write(out, "forecast.csv", write_forecast)
        total = forecast_total if config.synthetic_count is None else config.synthetic_count

        stage = "cluster"
        cmodel = cluster.kmeans_fit(tracks, config.k, config.feature_mode, seeds["cluster"])
        _write(out, "clusters.csv", cmodel.write_csv)

        stage = "plan"
        counts = cluster.sample_cluster_counts(cmodel.proportions, total, seeds["counts"])
        plan = cluster.select_seeds(cmodel, counts, seeds["seeds"], config.seed_mode,
                                    cluster.feature_matrix(tracks, config.feature_mode))
        _write(out, "seed_plan.csv", lambda fh: plan.write_csv(fh, cmodel.track_ids))

        stage = "train"
        tcfg = replace(config.train, rng_seed=seeds["autoencoder"])
        net, history = autoenc.train(tracks, tcfg, widths=config.widths)
        (out / "autoencoder.txt").write_text(net.to_text())
        _write(out, "loss_history.csv", lambda fh: autoenc.write_loss_csv(history, fh))

        stage = "synthesize"
        rng = np.random.default_rng(seeds["synthesis"])
        synthetic = autoenc.synthesize(net, plan, tracks, config.perturbation, rng)
        raw_synth = [(t.storm_id, trackprep.invert_scaler(t, scaler)) for t in synthetic]
        _write(out, "synthetic_tracks.csv",
               lambda fh: trackprep.write_raw_tracks_csv(raw_synth, fh))

        stage = "coverage"
        hist_grid = coverage.rasterize([trackprep.track_array(s) for s in eval_storms],
                                       config.coverage_cell, config.coverage_bounds)
        syn_grid = coverage.rasterize([pts for _, pts in raw_synth],
                                      config.coverage_cell, config.coverage_bounds)
        _write(out, "coverage_historical.csv", hist_grid.write_csv)
        _write(out, "coverage_synthetic.csv", syn_grid.write_csv)

        stage = "compare"
        report = coverage.compare(hist_grid, syn_grid)
        (out / "comparison.txt").write_text(report.to_text())
    except Exception as exc:
        raise PipelineError(stage, exc) from exc

    digests = {name: _sha256(out / name) for name in ARTIFACTS}
    lines = ["# run manifest v1"]
    lines += [f"config.{k} = {v}" for k, v in config.to_items()]
    lines.append(f"archive.sha256 = {archive_digest}")
    lines += [f"seed.{k} = {v}" for k, v in sorted(seeds.items())]
    lines += [
        f"arima.order = {order.p},{order.d},{order.q}",
        f"count.train_storms = {len(train_storms)}",
        f"count.eval_storms = {len(eval_storms)}",
        f"count.forecast_total = {forecast_total}",
        f"count.cluster_counts = {','.join(str(int(c)) for c in counts)}",
        f"count.synthetic = {len(synthetic)}",
    ]
    lines += [f"report.{k} = {v!r}" for k, v in report.__dict__.items()]
    lines += [f"artifact.{name}.sha256 = {d}" for name, d in digests.items()]
    manifest = out / MANIFEST
    manifest.write_text("\n".join(lines) + "\n")
    return RunResult(out, manifest, seeds, forecast_total, len(synthetic), report,
                     {name: out / name for name in ARTIFACTS})


def read_manifest(path: Union[str, Path]) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line and not line.startswith("#"):
            k, _, v = line.partition(" = ")
            out[k] = v
    return out
