"""
Fixed-length track resampling and feature scaling.

Every storm is reduced to ``n_points`` (default 20) triples of
(latitude, longitude, minimum pressure) placed at equal arc-length steps along
its lat/lon polyline. Arc length is flat Euclidean distance in degrees, which
is adequate at basin scale and keeps the geometry consistent with the
lat/lon plots and grids used elsewhere in the package.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

from .hurdat2 import Storm

LOGGER = logging.getLogger(__name__)

N_POINTS = 20
N_FEATURES = 3
FEATURES = ("lat", "lon", "pres")
DEGENERATE_EPS = 1e-6
AMBIENT_PRESSURE = 1010.0


class DegenerateTrackError(ValueError):
    pass


def _fill_linear(values: np.ndarray) -> np.ndarray:
    """Fill NaNs by linear interpolation over index; ends take the nearest valid value."""
    valid = ~np.isnan(values)
    if valid.all():
        return values
    idx = np.arange(len(values))
    out = values.copy()
    out[~valid] = np.interp(idx[~valid], idx[valid], values[valid])
    return out


def wind_to_pressure(wind_kt: np.ndarray) -> np.ndarray:
    """Atkinson-Holliday wind-pressure relation, inverted for pressure (mb)."""
    wind_kt = np.clip(np.asarray(wind_kt, dtype=float), 0.0, None)
    return AMBIENT_PRESSURE - (wind_kt / 6.7) ** (1.0 / 0.644)


def track_array(storm: Storm) -> np.ndarray:
    """Raw (m, 3) array of lat, lon, pressure with missing pressures filled.

    Missing pressures are interpolated between the nearest valid neighbours.
    Storms with no recorded pressure at all (common before the 1900s) get a
    wind-based estimate, or ambient pressure when wind is also absent.
    """
    lat = np.array([p.latitude for p in storm.points], dtype=float)
    lon = np.array([p.longitude for p in storm.points], dtype=float)
    pres = np.array([np.nan if p.min_pressure is None else p.min_pressure
                     for p in storm.points], dtype=float)
    if np.isnan(pres).all():
        wind = np.array([np.nan if p.max_wind is None else p.max_wind
                         for p in storm.points], dtype=float)
        if np.isnan(wind).all():
            pres = np.full_like(pres, AMBIENT_PRESSURE)
        else:
            pres = wind_to_pressure(_fill_linear(wind))
    else:
        pres = _fill_linear(pres)
    return np.column_stack([lat, lon, pres])


def cumulative_arc_length(latlon: np.ndarray) -> np.ndarray:
    seg = np.hypot(np.diff(latlon[:, 0]), np.diff(latlon[:, 1]))
    return np.concatenate([[0.0], np.cumsum(seg)])


def resample_points(points: np.ndarray, n_points: int = N_POINTS) -> np.ndarray:
    """Resample an (m, 3) lat/lon/pressure array to equal arc-length spacing.

    Pressure is interpolated linearly along the same arc-length parameter.
    Where several records share a position, the last of them is used.
    A stationary track (zero total length) returns ``n_points`` copies of its
    first point.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != N_FEATURES:
        raise ValueError(f"expected (m, {N_FEATURES}) array, got {points.shape}")
    if len(points) < 2:
        raise DegenerateTrackError(f"need at least 2 points, got {len(points)}")
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    if np.isnan(points).any():
        raise ValueError("track contains NaN values")

    s = cumulative_arc_length(points[:, :2])
    total = s[-1]
    if total == 0.0:
        return np.repeat(points[:1], n_points, axis=0)

    # np.interp needs strictly increasing abscissae. Of each run of records at
    # one position keep the last, i.e. the state in which the storm moved on.
    keep = np.concatenate([np.diff(s) > 0, [True]])
    s, points = s[keep], points[keep]

    targets = np.linspace(0.0, total, n_points)
    out = np.column_stack([np.interp(targets, s, points[:, j]) for j in range(N_FEATURES)])
    out[0, :2] = points[0, :2]
    out[-1, :2] = points[-1, :2]
    return out


def resample_track(storm: Storm, n_points: int = N_POINTS) -> np.ndarray:
    """Resample one storm to ``n_points`` (lat, lon, pressure) triples."""
    if len(storm.points) < 2:
        raise DegenerateTrackError(f"{storm.id}: need at least 2 points, got {len(storm.points)}")
    return resample_points(track_array(storm), n_points)


@dataclass(frozen=True)
class NormalizedTrack:
    storm_id: str
    points: np.ndarray  # (n_points, 3), every value in [0, 1]

    def flat(self, feature_mode: str = "3d") -> np.ndarray:
        """Flattened feature vector; ``"2d"`` keeps only lat/lon."""
        cols = 2 if feature_mode == "2d" else 3
        return self.points[:, :cols].ravel()


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature min-max scaler for (lat, lon, pressure)."""

    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        if np.any(self.maximum <= self.minimum):
            raise ValueError("scaler requires max > min for every feature")

    @property
    def span(self) -> np.ndarray:
        return self.maximum - self.minimum

    def forward(self, points: np.ndarray) -> tuple[np.ndarray, int]:
        """Scale to [0, 1]; returns the scaled array and how many values were clamped."""
        scaled = (np.asarray(points, dtype=float) - self.minimum) / self.span
        clamped = int(np.count_nonzero((scaled < 0.0) | (scaled > 1.0)))
        return np.clip(scaled, 0.0, 1.0), clamped

    def inverse(self, scaled: np.ndarray) -> np.ndarray:
        return np.asarray(scaled, dtype=float) * self.span + self.minimum

    def to_text(self) -> str:
        lines = ["# feature scaler v1"]
        for name, lo, hi in zip(FEATURES, self.minimum, self.maximum):
            lines.append(f"{name}.min = {float(lo)!r}")
            lines.append(f"{name}.max = {float(hi)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FeatureScaler":
        values = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            values[key.strip()] = float(val)
        lo = np.array([values[f"{n}.min"] for n in FEATURES])
        hi = np.array([values[f"{n}.max"] for n in FEATURES])
        return cls(lo, hi)


def fit_scaler(tracks: Sequence[np.ndarray]) -> FeatureScaler:
    """Min/max of every feature over all points of all tracks.

    A feature with zero range is widened by ``DEGENERATE_EPS`` on each side,
    so a constant maps to 0.5.
    """
    if len(tracks) == 0:
        raise ValueError("cannot fit a scaler on an empty corpus")
    stacked = np.concatenate([np.asarray(t, dtype=float).reshape(-1, N_FEATURES)
                              for t in tracks])
    lo = stacked.min(axis=0)
    hi = stacked.max(axis=0)
    flat = hi <= lo
    lo = np.where(flat, lo - DEGENERATE_EPS, lo)
    hi = np.where(flat, hi + DEGENERATE_EPS, hi)
    return FeatureScaler(lo, hi)


def apply_scaler(track: np.ndarray, scaler: FeatureScaler,
                 storm_id: str = "") -> tuple[NormalizedTrack, int]:
    scaled, clamped = scaler.forward(track)
    if clamped:
        LOGGER.debug("%s: %d values clamped into [0, 1]", storm_id, clamped)
    return NormalizedTrack(storm_id, scaled), clamped


def invert_scaler(track, scaler: FeatureScaler) -> np.ndarray:
    points = track.points if isinstance(track, NormalizedTrack) else track
    return scaler.inverse(points)


def prepare_corpus(storms: Iterable[Storm], n_points: int = N_POINTS,
                   scaler: Optional[FeatureScaler] = None
                   ) -> tuple[list[NormalizedTrack], FeatureScaler, list[np.ndarray]]:
    """Resample storms, fit a scaler (unless given) and normalize.

    Storms with fewer than two points are skipped with a log message.
    Returns normalized tracks, the scaler, and the raw resampled arrays.
    """
    ids, raw = [], []
    for storm in storms:
        try:
            raw.append(resample_track(storm, n_points))
        except DegenerateTrackError as exc:
            LOGGER.info("skipping %s", exc)
            continue
        ids.append(str(storm.id))
    if scaler is None:
        scaler = fit_scaler(raw)
    normalized = [apply_scaler(r, scaler, sid)[0] for sid, r in zip(ids, raw)]
    return normalized, scaler, raw


def write_tracks_csv(tracks: Iterable[NormalizedTrack], out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["storm_id", "index", "lat_scaled", "lon_scaled", "pres_scaled"])
    for t in tracks:
        for i, (a, b, c) in enumerate(t.points):
            writer.writerow([t.storm_id, i, repr(float(a)), repr(float(b)), repr(float(c))])


def read_tracks_csv(src: TextIO) -> list[NormalizedTrack]:
    rows: dict[str, list] = {}
    for row in csv.DictReader(src):
        rows.setdefault(row["storm_id"], []).append(
            (int(row["index"]), float(row["lat_scaled"]), float(row["lon_scaled"]),
             float(row["pres_scaled"])))
    out = []
    for sid, pts in rows.items():
        pts.sort()
        out.append(NormalizedTrack(sid, np.array([p[1:] for p in pts])))
    return out


def write_raw_tracks_csv(tracks: Iterable[tuple[str, np.ndarray]], out: TextIO) -> None:
    """Unscaled tracks: storm_id, index, lat, lon, pres in degrees / mb."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["storm_id", "index", "lat", "lon", "pres"])
    for sid, pts in tracks:
        for i, (a, b, c) in enumerate(pts):
            writer.writerow([sid, i, repr(float(a)), repr(float(b)), repr(float(c))])


def read_raw_tracks_csv(src: TextIO) -> list[tuple[str, np.ndarray]]:
    rows: dict[str, list] = {}
    for row in csv.DictReader(src):
        rows.setdefault(row["storm_id"], []).append(
            (int(row["index"]), float(row["lat"]), float(row["lon"]), float(row["pres"])))
    return [(sid, np.array([p[1:] for p in sorted(pts)])) for sid, pts in rows.items()]
