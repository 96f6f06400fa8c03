"""
Command-line front end.

One subcommand per pipeline stage plus ``run`` for the whole experiment.
Stage commands take the same INI config as ``run`` (``--config``); flags given
on the command line win over config values. Randomized commands require
``--seed`` and derive their streams from it exactly as ``run`` does, so
chaining the stage commands with one seed reproduces a full run.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import arima, autoenc, cluster, coverage, hurdat2, pipeline, stats, trackprep

LOGGER = logging.getLogger("stormsynth")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _years(text: str) -> tuple[int, int]:
    try:
        return pipeline._years(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected YEAR or YEAR:YEAR, got {text!r}")


def _order(text: str) -> arima.ArimaOrder:
    try:
        return arima.ArimaOrder.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _out_file(args, name: str) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _config(args) -> pipeline.PipelineConfig:
    if getattr(args, "config", None):
        return pipeline.PipelineConfig.from_file(args.config)
    return pipeline.PipelineConfig()


def _pick(flag, default):
    return default if flag is None else flag


def _read_tracks(path: str) -> list[trackprep.NormalizedTrack]:
    with open(path, newline="") as fh:
        return trackprep.read_tracks_csv(fh)


def _storms(args, cfg, years_default) -> list[hurdat2.Storm]:
    archive = _pick(args.archive, cfg.archive if args.config else None)
    if archive is None:
        raise UsageError("--archive is required")
    statuses = tuple(args.status) if args.status else cfg.statuses
    lo, hi = _pick(args.years, years_default)
    storms = hurdat2.read_archive(archive)
    return hurdat2.filter_hurricanes(storms, lo, hi, statuses)


# ---------------------------------------------------------------- commands

def cmd_ingest(args) -> int:
    cfg = _config(args)
    storms = _storms(args, cfg, cfg.train_years)
    LOGGER.info("%d storms selected", len(storms))
    if args.out is None:
        if args.resample:
            raise UsageError("--resample needs --out")
        hurdat2.write_storm_summary(storms, sys.stdout)
        return EXIT_OK
    with open(_out_file(args, "storms.csv"), "w", newline="") as fh:
        hurdat2.write_storm_summary(storms, fh)
    with open(_out_file(args, "track_points.csv"), "w", newline="") as fh:
        hurdat2.write_track_points(storms, fh)
    if args.resample:
        tracks, scaler, _ = trackprep.prepare_corpus(storms, args.resample)
        _out_file(args, "scaler.txt").write_text(scaler.to_text())
        with open(_out_file(args, "training_tracks.csv"), "w", newline="") as fh:
            trackprep.write_tracks_csv(tracks, fh)
        LOGGER.info("%d tracks resampled to %d points", len(tracks), args.resample)
    return EXIT_OK


def cmd_stats(args) -> int:
    cfg = _config(args)
    storms = _storms(args, cfg, cfg.train_years)
    lo, hi = _pick(args.years, cfg.train_years)
    annual = stats.annual_counts(storms, lo, hi)
    if args.out is None:
        stats.write_annual_csv(annual, sys.stdout)
        return EXIT_OK
    with open(_out_file(args, "annual_counts.csv"), "w", newline="") as fh:
        stats.write_annual_csv(annual, fh)
    with open(_out_file(args, "monthly_counts.csv"), "w", newline="") as fh:
        stats.write_monthly_csv(stats.monthly_histogram(storms), fh)
    density = stats.start_point_density(storms, _pick(args.cell, cfg.start_cell))
    with open(_out_file(args, "start_density.csv"), "w", newline="") as fh:
        stats.write_density_csv(density, fh)
    return EXIT_OK


def cmd_forecast(args) -> int:
    cfg = _config(args)
    with open(args.series, newline="") as fh:
        series = stats.read_annual_csv(fh)
    values = series.counts.astype(float)
    if args.search:
        p, d, q = _pick(args.grid, cfg.arima_grid)
        order = arima.grid_search(values, p, d, q, _pick(args.holdout, cfg.arima_holdout),
                                  reference=arima.ArimaOrder(4, 1, 1))
    elif args.order is not None:
        order = args.order
    elif cfg.arima_order is not None:
        order = arima.ArimaOrder(*cfg.arima_order)
    else:
        raise UsageError("config requests an order search; pass --search or --order")
    model = arima.fit(values, order)
    raw = arima.forecast(model, args.horizon)
    counts = arima.forecast_counts(model, args.horizon)
    lines = ["year,forecast,count"]
    lines += [f"{series.end_year + 1 + i},{float(v)!r},{int(c)}"
              for i, (v, c) in enumerate(zip(raw, counts))]
    text = "\n".join(lines) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        _out_file(args, "forecast.csv").write_text(text)
        _out_file(args, "arima_model.txt").write_text(model.to_text())
    return EXIT_OK


def cmd_cluster(args) -> int:
    cfg = _config(args)
    tracks = _read_tracks(args.tracks)
    mode = _pick(args.feature_mode, cfg.feature_mode)
    model = cluster.kmeans_fit(tracks, _pick(args.k, cfg.k), mode,
                               pipeline.derive_seed(args.seed, "cluster"))
    LOGGER.info("cluster sizes %s, inertia %.6g", model.sizes().tolist(), model.inertia)
    with open(_out_file(args, "clusters.csv"), "w", newline="") as fh:
        model.write_csv(fh)
    total = args.count
    if total is None and args.forecast is not None:
        with open(args.forecast, newline="") as fh:
            total = sum(int(row["count"]) for row in csv.DictReader(fh))
    if total is not None:
        counts = cluster.sample_cluster_counts(model.proportions, total,
                                               pipeline.derive_seed(args.seed, "counts"))
        plan = cluster.select_seeds(model, counts, pipeline.derive_seed(args.seed, "seeds"),
                                    _pick(args.seed_mode, cfg.seed_mode),
                                    cluster.feature_matrix(tracks, mode))
        with open(_out_file(args, "seed_plan.csv"), "w", newline="") as fh:
            plan.write_csv(fh, model.track_ids)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    tracks = _read_tracks(args.tracks)
    tcfg = replace(cfg.train, rng_seed=pipeline.derive_seed(args.seed, "autoencoder"),
                   epochs=_pick(args.epochs, cfg.train.epochs),
                   learning_rate=_pick(args.learning_rate, cfg.train.learning_rate),
                   batch_size=_pick(args.batch_size, cfg.train.batch_size),
                   input_noise_std=_pick(args.noise_std, cfg.train.input_noise_std))
    net, history = autoenc.train(tracks, tcfg, widths=cfg.widths)
    _out_file(args, "autoencoder.txt").write_text(net.to_text())
    with open(_out_file(args, "loss_history.csv"), "w", newline="") as fh:
        autoenc.write_loss_csv(history, fh)
    LOGGER.info("final loss %.6g", history[-1])
    return EXIT_OK


def cmd_synthesize(args) -> int:
    cfg = _config(args)
    tracks = _read_tracks(args.tracks)
    net = autoenc.Autoencoder.from_text(Path(args.model).read_text())
    scaler = trackprep.FeatureScaler.from_text(Path(args.scaler).read_text())
    with open(args.plan, newline="") as fh:
        plan = cluster.read_seed_plan_csv(fh, [t.storm_id for t in tracks])
    pert = replace(cfg.perturbation, mean=_pick(args.mean, cfg.perturbation.mean),
                   std=_pick(args.std, cfg.perturbation.std))
    rng = np.random.default_rng(pipeline.derive_seed(args.seed, "synthesis"))
    synthetic = autoenc.synthesize(net, plan, tracks, pert, rng)
    raw = [(t.storm_id, trackprep.invert_scaler(t, scaler)) for t in synthetic]
    with open(_out_file(args, "synthetic_tracks.csv"), "w", newline="") as fh:
        trackprep.write_raw_tracks_csv(raw, fh)
    LOGGER.info("%d synthetic tracks", len(raw))
    return EXIT_OK


def cmd_coverage(args) -> int:
    cfg = _config(args)
    if (args.tracks is None) == (args.archive is None):
        raise UsageError("give exactly one of --tracks or --archive")
    if args.tracks is not None:
        with open(args.tracks, newline="") as fh:
            arrays = [pts for _, pts in trackprep.read_raw_tracks_csv(fh)]
    else:
        arrays = [trackprep.track_array(s) for s in _storms(args, cfg, cfg.eval_years)]
    grid = coverage.rasterize(arrays, _pick(args.cell, cfg.coverage_cell),
                              _pick(args.bounds, cfg.coverage_bounds), args.weighting)
    if args.out is None:
        grid.write_csv(sys.stdout)
    else:
        with open(_out_file(args, args.name), "w", newline="") as fh:
            grid.write_csv(fh)
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _config(args)
    cell = _pick(args.cell, cfg.coverage_cell)
    bounds = _pick(args.bounds, cfg.coverage_bounds)
    with open(args.historical, newline="") as fh:
        hist = coverage.read_grid_csv(fh, cell, bounds)
    with open(args.synthetic, newline="") as fh:
        syn = coverage.read_grid_csv(fh, cell, bounds)
    text = coverage.compare(hist, syn).to_text()
    if args.out is None:
        sys.stdout.write(text)
    else:
        _out_file(args, "comparison.txt").write_text(text)
    return EXIT_OK


def cmd_run(args) -> int:
    overrides = dict(archive=args.archive, output_dir=args.out, seed=args.seed,
                     synthetic_count=args.synthetic_count)
    if args.config:
        cfg = pipeline.PipelineConfig.from_file(args.config, **overrides)
    else:
        if args.archive is None or args.out is None or args.seed is None:
            raise UsageError("without --config, --archive, --out and --seed are required")
        cfg = pipeline.PipelineConfig(**{k: v for k, v in overrides.items() if v is not None})
    if args.epochs is not None:
        cfg = replace(cfg, train=replace(cfg.train, epochs=args.epochs))
    if args.search:
        cfg = replace(cfg, arima_order=None)
    elif args.order is not None:
        order = args.order
        cfg = replace(cfg, arima_order=(order.p, order.d, order.q))
    result = pipeline.run(cfg)
    print(result.manifest_path)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stormsynth",
                     description="Hurricane track statistics, forecasting and synthesis.")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="more log output on stderr (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, archive=True, out_help="output directory (default: stdout)"):
        p.add_argument("--config", help="INI config; flags override its values")
        p.add_argument("--out", help=out_help)
        if archive:
            p.add_argument("--archive", help="HURDAT2 file, or - for stdin")
            p.add_argument("--years", type=_years, help="inclusive era, e.g. 2011:2021")
            p.add_argument("--status", action="append",
                           help="qualifying status code (repeatable, default HU)")

    p = sub.add_parser("ingest", help="parse and filter an archive")
    common(p)
    p.add_argument("--resample", type=int, metavar="N",
                   help="also write N-point normalized tracks and the scaler")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="annual, monthly and start-point statistics")
    common(p)
    p.add_argument("--cell", type=float, help="start-point cell size in degrees")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("forecast", help="fit ARIMA to annual counts and forecast")
    common(p, archive=False)
    p.add_argument("--series", required=True, help="annual counts CSV (year,count)")
    p.add_argument("--order", type=_order, help="p,d,q (default from config: 4,1,1)")
    p.add_argument("--search", action="store_true", help="select the order by holdout grid search")
    p.add_argument("--grid", type=lambda s: tuple(int(v) for v in s.split(",")),
                   help="search limits pmax,dmax,qmax")
    p.add_argument("--holdout", type=int, help="years held out during the search")
    p.add_argument("--horizon", type=int, default=10, help="years to forecast")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("cluster", help="k-means on normalized tracks and seed planning")
    common(p, archive=False, out_help="output directory")
    p.add_argument("--tracks", required=True, help="normalized tracks CSV")
    p.add_argument("--seed", type=int, required=True, help="master seed")
    p.add_argument("--k", type=int, help="number of clusters")
    p.add_argument("--feature-mode", choices=("2d", "3d"))
    p.add_argument("--seed-mode", choices=("uniform", "nearest"))
    p.add_argument("--count", type=int, help="synthetic tracks to plan")
    p.add_argument("--forecast", help="forecast CSV whose count column sets the total")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("train", help="train the track autoencoder")
    common(p, archive=False, out_help="output directory")
    p.add_argument("--tracks", required=True, help="normalized tracks CSV")
    p.add_argument("--seed", type=int, required=True, help="master seed")
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--noise-std", type=float, help="input noise std on noisy epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synthesize", help="decode perturbed latents of planned seeds")
    common(p, archive=False, out_help="output directory")
    p.add_argument("--tracks", required=True, help="normalized tracks CSV")
    p.add_argument("--model", required=True, help="autoencoder text file")
    p.add_argument("--scaler", required=True, help="scaler text file")
    p.add_argument("--plan", required=True, help="seed plan CSV")
    p.add_argument("--seed", type=int, required=True, help="master seed")
    p.add_argument("--mean", type=float, help="latent multiplier mean")
    p.add_argument("--std", type=float, help="latent multiplier std")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("coverage", help="rasterize tracks onto a storm-touch grid")
    common(p)
    p.add_argument("--tracks", help="raw tracks CSV (storm_id,index,lat,lon,pres)")
    p.add_argument("--cell", type=float, help="cell size in degrees")
    p.add_argument("--bounds", type=_floats, help="lat_min,lat_max,lon_min,lon_max")
    p.add_argument("--weighting", choices=("count", "intensity"), default="count")
    p.add_argument("--name", default="coverage.csv", help="file name inside --out")
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("compare", help="compare historical and synthetic grids")
    common(p, archive=False)
    p.add_argument("--historical", required=True, help="coverage CSV")
    p.add_argument("--synthetic", required=True, help="coverage CSV")
    p.add_argument("--cell", type=float)
    p.add_argument("--bounds", type=_floats)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("run", help="the full experiment with manifest")
    p.add_argument("--config", help="INI config; flags override its values")
    p.add_argument("--archive")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="master seed (required unless in config)")
    p.add_argument("--synthetic-count", type=int, help="fix the synthetic total")
    p.add_argument("--order", type=_order)
    p.add_argument("--search", action="store_true")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_run)
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, pipeline.PipelineError):
        return _exit_code(exc.cause)
    if isinstance(exc, (arima.ArimaFitError, ArithmeticError, np.linalg.LinAlgError)):
        return EXIT_NUMERIC
    return EXIT_DATA


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"stormsynth {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, OSError, RuntimeError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        print(f"stormsynth {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
