"""Annual and monthly storm counts, and the joint density of genesis points."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence, TextIO

import numpy as np

from .hurdat2 import Storm

MONTHS = ("Jan", "Feb", "Mar", "Apr", "May", "Jun",
          "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")
SEASON_MONTHS = (6, 7, 8, 9, 10, 11)


@dataclass(frozen=True)
class AnnualSeries:
    start_year: int
    end_year: int
    counts: np.ndarray

    def __post_init__(self):
        if len(self.counts) != self.end_year - self.start_year + 1:
            raise ValueError("counts length does not match year range")

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.start_year, self.end_year + 1)

    def window(self, start_year: int, end_year: int) -> "AnnualSeries":
        if start_year < self.start_year or end_year > self.end_year:
            raise ValueError("window outside series range")
        i, j = start_year - self.start_year, end_year - self.start_year + 1
        return AnnualSeries(start_year, end_year, self.counts[i:j].copy())


def annual_counts(storms: Sequence[Storm], start_year: Optional[int] = None,
                  end_year: Optional[int] = None) -> AnnualSeries:
    """Number of storms per year, zero-filled over ``start_year..end_year``.

    Bounds default to the earliest and latest year present. Storms outside the
    bounds are ignored.
    """
    years = [s.id.year for s in storms]
    if start_year is None or end_year is None:
        if not years:
            raise ValueError("year range required for an empty storm set")
        start_year = min(years) if start_year is None else start_year
        end_year = max(years) if end_year is None else end_year
    counts = np.zeros(end_year - start_year + 1, dtype=np.int64)
    for y in years:
        if start_year <= y <= end_year:
            counts[y - start_year] += 1
    return AnnualSeries(start_year, end_year, counts)


def monthly_histogram(storms: Sequence[Storm]) -> np.ndarray:
    """Twelve counts, January first, keyed by the month of each storm's first point."""
    counts = np.zeros(12, dtype=np.int64)
    for s in storms:
        counts[s.points[0].timestamp.month - 1] += 1
    return counts


def season_share(monthly: np.ndarray, months: Sequence[int] = SEASON_MONTHS) -> float:
    total = monthly.sum()
    return float(monthly[[m - 1 for m in months]].sum() / total) if total else float("nan")


@dataclass(frozen=True)
class StartPointGrid:
    """Probability mass of genesis points per cell.

    Cell ``(r, c)`` covers ``[lat0 + r*s, lat0 + (r+1)*s) x [lon0 + c*s, lon0 + (c+1)*s)``.
    """

    cell_size: float
    origin: tuple
    cells: dict

    def cell_bounds(self, row: int, col: int) -> tuple[float, float, float, float]:
        lat0, lon0 = self.origin
        s = self.cell_size
        return lat0 + row * s, lat0 + (row + 1) * s, lon0 + col * s, lon0 + (col + 1) * s

    def total(self) -> float:
        return math.fsum(self.cells.values())

    def lat_marginal(self) -> dict:
        out: dict = {}
        for (r, _), m in self.cells.items():
            out[r] = out.get(r, 0.0) + m
        return dict(sorted(out.items()))

    def lon_marginal(self) -> dict:
        out: dict = {}
        for (_, c), m in self.cells.items():
            out[c] = out.get(c, 0.0) + m
        return dict(sorted(out.items()))

    def top_cells(self, n: int) -> list[tuple[tuple[int, int], float]]:
        return sorted(self.cells.items(), key=lambda kv: (-kv[1], kv[0]))[:n]


def start_point_density(storms: Sequence[Storm], cell_size: float = 5.0,
                        origin: tuple = (-90.0, -180.0)) -> StartPointGrid:
    if not storms:
        raise ValueError("start-point density is undefined for an empty storm set")
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    lat0, lon0 = origin
    hits = Counter()
    for s in storms:
        p = s.points[0]
        hits[(math.floor((p.latitude - lat0) / cell_size),
              math.floor((p.longitude - lon0) / cell_size))] += 1
    n = len(storms)
    cells = {key: count / n for key, count in sorted(hits.items())}
    return StartPointGrid(cell_size, (lat0, lon0), cells)


def write_annual_csv(series: AnnualSeries, out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["year", "count"])
    for y, c in zip(series.years, series.counts):
        w.writerow([int(y), int(c)])


def read_annual_csv(src: TextIO) -> AnnualSeries:
    rows = [(int(r["year"]), float(r["count"])) for r in csv.DictReader(src)]
    if not rows:
        raise ValueError("empty series")
    rows.sort()
    years = [y for y, _ in rows]
    if years != list(range(years[0], years[-1] + 1)):
        raise ValueError("series years must be contiguous")
    return AnnualSeries(years[0], years[-1], np.array([c for _, c in rows]))


def write_monthly_csv(counts: np.ndarray, out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["month", "count"])
    for m, c in enumerate(counts, start=1):
        w.writerow([m, int(c)])


def write_density_csv(grid: StartPointGrid, out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["lat_bin", "lon_bin", "lat_lo", "lon_lo", "mass"])
    for (r, c), m in grid.cells.items():
        lat_lo, _, lon_lo, _ = grid.cell_bounds(r, c)
        w.writerow([r, c, lat_lo, lon_lo, repr(float(m))])
