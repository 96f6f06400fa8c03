"""
Storm-touch coverage grids and historical-vs-synthetic comparison.

Each consecutive pair of track points is treated as a line segment. A cell is
visited when the segment passes through its interior: the segment is cut at
every grid-line crossing and the cell holding the midpoint of each piece is
recorded. Touching a cell only at a corner does not count, so the visited
set is the same when the track is reversed or a segment is split.
A storm adds at most one to any cell.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

LOGGER = logging.getLogger(__name__)

# lat_min, lat_max, lon_min, lon_max
ATLANTIC_BOUNDS = (0.0, 60.0, -100.0, 0.0)


@dataclass(frozen=True)
class CoverageGrid:
    cell_size: float
    bounds: tuple
    counts: np.ndarray  # (n_rows, n_cols), row 0 at lat_min

    @property
    def shape(self) -> tuple:
        return self.counts.shape

    def lat_center(self, row) -> np.ndarray:
        return self.bounds[0] + (np.asarray(row) + 0.5) * self.cell_size

    def lon_center(self, col) -> np.ndarray:
        return self.bounds[2] + (np.asarray(col) + 0.5) * self.cell_size

    def cell_of(self, lat: float, lon: float) -> tuple[int, int]:
        return (math.floor((lat - self.bounds[0]) / self.cell_size),
                math.floor((lon - self.bounds[2]) / self.cell_size))

    def touched(self) -> np.ndarray:
        return self.counts > 0

    def write_csv(self, out: TextIO) -> None:
        """Sparse CSV of non-empty cells."""
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["lat_index", "lon_index", "lat_center", "lon_center", "count"])
        for r, c in zip(*np.nonzero(self.counts)):
            val = self.counts[r, c]
            w.writerow([int(r), int(c), repr(float(self.lat_center(r))),
                        repr(float(self.lon_center(c))),
                        int(val) if self.counts.dtype.kind in "iu" else repr(float(val))])

    def write_dense(self, out: TextIO) -> None:
        """Whitespace matrix, first row = southernmost band, with a header comment."""
        lat_min, lat_max, lon_min, lon_max = self.bounds
        out.write(f"# cell_size={self.cell_size!r} bounds={lat_min!r},{lat_max!r},"
                  f"{lon_min!r},{lon_max!r} shape={self.shape[0]},{self.shape[1]}\n")
        fmt = "%d" if self.counts.dtype.kind in "iu" else "%.17g"
        np.savetxt(out, self.counts, fmt=fmt)


def empty_grid(cell_size: float = 0.5, bounds: Sequence[float] = ATLANTIC_BOUNDS,
               dtype=np.int64) -> CoverageGrid:
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    lat_min, lat_max, lon_min, lon_max = bounds
    if lat_max <= lat_min or lon_max <= lon_min:
        raise ValueError(f"inverted bounds {tuple(bounds)}")
    rows = int(round((lat_max - lat_min) / cell_size))
    cols = int(round((lon_max - lon_min) / cell_size))
    return CoverageGrid(float(cell_size), tuple(float(b) for b in bounds),
                        np.zeros((rows, cols), dtype=dtype))


def segment_cells(a: Sequence[float], b: Sequence[float], cell_size: float,
                  origin: Sequence[float]) -> set:
    """Cells ``(row, col)`` whose interior the segment a->b passes through.

    ``a`` and ``b`` are (lat, lon); ``origin`` is the (lat, lon) of cell (0, 0)'s
    lower-left corner. Grid indices may be negative or beyond any bounds.
    """
    y0 = (a[0] - origin[0]) / cell_size
    x0 = (a[1] - origin[1]) / cell_size
    y1 = (b[0] - origin[0]) / cell_size
    x1 = (b[1] - origin[1]) / cell_size
    dx, dy = x1 - x0, y1 - y0
    if dx == 0 and dy == 0:
        return {(math.floor(y0), math.floor(x0))}
    ts = [0.0, 1.0]
    for start, delta in ((x0, dx), (y0, dy)):
        if delta == 0:
            continue
        lo, hi = sorted((start, start + delta))
        for k in range(math.floor(lo) + 1, math.ceil(hi)):
            ts.append((k - start) / delta)
    ts.sort()
    cells = set()
    for t0, t1 in zip(ts, ts[1:]):
        if t1 <= t0:
            continue
        tm = 0.5 * (t0 + t1)
        cells.add((math.floor(y0 + tm * dy), math.floor(x0 + tm * dx)))
    return cells


def track_cells(points: np.ndarray, cell_size: float, origin: Sequence[float]) -> set:
    """Union of cells visited by every segment of one track (lat, lon columns)."""
    pts = np.asarray(points, dtype=float)[:, :2]
    if len(pts) == 1:
        return segment_cells(pts[0], pts[0], cell_size, origin)
    cells = set()
    moved = False
    for a, b in zip(pts, pts[1:]):
        if a[0] == b[0] and a[1] == b[1]:
            continue
        moved = True
        cells |= segment_cells(a, b, cell_size, origin)
    if not moved:
        cells = segment_cells(pts[0], pts[0], cell_size, origin)
    return cells


def rasterize(tracks: Iterable[np.ndarray], cell_size: float = 0.5,
              bounds: Sequence[float] = ATLANTIC_BOUNDS,
              weighting: str = "count") -> CoverageGrid:
    """Accumulate storm-touch counts over a lat/lon grid.

    Parameters
    ----------
    tracks : iterable of ndarray
        One (m, 2+) array per storm with latitude and longitude columns in
        degrees, optionally followed by minimum pressure.
    cell_size : float
    bounds : (lat_min, lat_max, lon_min, lon_max)
    weighting : {"count", "intensity"}
        ``"count"`` adds 1 per storm per visited cell. ``"intensity"`` adds
        ``1000 / p`` where ``p`` is the storm's minimum pressure over the
        segments touching the cell (needs a third column).
    """
    grid = empty_grid(cell_size, bounds, np.int64 if weighting == "count" else float)
    if weighting not in ("count", "intensity"):
        raise ValueError(f"unknown weighting {weighting!r}")
    lat_min, lat_max, lon_min, lon_max = grid.bounds
    nrow, ncol = grid.shape
    origin = (lat_min, lon_min)
    outside = 0
    for pts in tracks:
        pts = np.asarray(pts, dtype=float)
        inside = ((pts[:, 0] >= lat_min) & (pts[:, 0] < lat_max)
                  & (pts[:, 1] >= lon_min) & (pts[:, 1] < lon_max))
        outside += int((~inside).sum())
        if weighting == "count":
            for r, c in track_cells(pts, cell_size, origin):
                if 0 <= r < nrow and 0 <= c < ncol:
                    grid.counts[r, c] += 1
        else:
            if pts.shape[1] < 3:
                raise ValueError("intensity weighting needs a pressure column")
            best: dict = {}
            segs = list(zip(pts, pts[1:])) or [(pts[0], pts[0])]
            for a, b in segs:
                p = min(a[2], b[2])
                for cell in segment_cells(a[:2], b[:2], cell_size, origin):
                    best[cell] = min(best.get(cell, np.inf), p)
            for (r, c), p in best.items():
                if 0 <= r < nrow and 0 <= c < ncol:
                    grid.counts[r, c] += 1000.0 / p
    if outside:
        LOGGER.info("%d track points fell outside the grid bounds", outside)
    return grid


def read_grid_csv(src: TextIO, cell_size: float = 0.5,
                  bounds: Sequence[float] = ATLANTIC_BOUNDS) -> CoverageGrid:
    rows = list(csv.DictReader(src))
    integral = all(float(r["count"]).is_integer() for r in rows)
    grid = empty_grid(cell_size, bounds, np.int64 if integral else float)
    for r in rows:
        i, j = int(r["lat_index"]), int(r["lon_index"])
        if not (0 <= i < grid.shape[0] and 0 <= j < grid.shape[1]):
            raise ValueError(f"cell ({i}, {j}) outside a {grid.shape} grid")
        grid.counts[i, j] = float(r["count"])
    return grid


@dataclass(frozen=True)
class ComparisonReport:
    pearson_r: float            # over cells touched by either grid
    pearson_r_all_cells: float  # over every in-bounds cell, zeros included
    nrmse: float                # RMSE over union cells / historical max count
    touched_ratio: float        # synthetic touched cells / historical touched cells
    top_decile_overlap: float   # share of historical top-10% cells also in synthetic top 10%
    union_cells: int

    def to_text(self) -> str:
        return "".join(f"{k} = {v!r}\n" for k, v in self.__dict__.items())


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation; with a constant input it is 1 for identical data, else 0."""
    if len(a) == 0:
        return float("nan")
    a = a.astype(float)
    b = b.astype(float)
    da, db = a - a.mean(), b - b.mean()
    na, nb = math.sqrt(float(da @ da)), math.sqrt(float(db @ db))
    if na == 0 or nb == 0:
        return 1.0 if np.array_equal(a, b) else 0.0
    return float(np.clip((da @ db) / (na * nb), -1.0, 1.0))


def _top_cells(counts: np.ndarray, fraction: float) -> set:
    flat = counts.ravel()
    touched = np.flatnonzero(flat > 0)
    if len(touched) == 0:
        return set()
    n = max(1, math.ceil(fraction * len(touched)))
    # ties resolved by cell index so the set is deterministic
    order = touched[np.lexsort((touched, -flat[touched]))]
    return set(order[:n].tolist())


def top_decile_cells(grid: CoverageGrid) -> list[tuple[int, int]]:
    idx = sorted(_top_cells(grid.counts, 0.1))
    return [divmod(i, grid.shape[1]) for i in idx]


def compare(historical: CoverageGrid, synthetic: CoverageGrid) -> ComparisonReport:
    """Quantify agreement between two grids with the same cell size and bounds."""
    if (historical.shape != synthetic.shape or historical.cell_size != synthetic.cell_size
            or historical.bounds != synthetic.bounds):
        raise ValueError("grids differ in shape, cell size or bounds")
    h, s = historical.counts, synthetic.counts
    union = (h > 0) | (s > 0)
    hu, su = h[union].astype(float), s[union].astype(float)
    hmax = float(h.max()) if h.size else 0.0
    rmse = math.sqrt(float(np.mean((hu - su) ** 2))) if union.any() else 0.0
    nrmse = rmse / hmax if hmax > 0 else (0.0 if rmse == 0 else float("inf"))
    nh, ns = int((h > 0).sum()), int((s > 0).sum())
    ratio = ns / nh if nh else (float("nan") if ns == 0 else float("inf"))
    top_h, top_s = _top_cells(h, 0.1), _top_cells(s, 0.1)
    overlap = len(top_h & top_s) / len(top_h) if top_h else float("nan")
    return ComparisonReport(
        pearson_r=_pearson(hu, su),
        pearson_r_all_cells=_pearson(h.ravel(), s.ravel()),
        nrmse=nrmse,
        touched_ratio=ratio,
        top_decile_overlap=overlap,
        union_cells=int(union.sum()),
    )
