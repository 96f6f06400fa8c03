"""
Generator for small, format-valid HURDAT2 archives.

The storms follow a few stylized Atlantic regimes (long-track recurvers,
Caribbean westward runners, Gulf northward movers and subtropical
north-eastward movers). They are meant for tests, demos and smoke runs
of the pipeline, not as a substitute for the observed record.
"""

from __future__ import annotations

from datetime import datetime, timedelta
from typing import Optional

import numpy as np

from .hurdat2 import Storm, StormId, TrackPoint, format_archive

# name: (lat range, lon range, initial heading deg (0=east, 90=north), turn deg/step, speed deg/step)
REGIMES = {
    "recurver": ((10.0, 15.0), (-45.0, -25.0), 170.0, -2.2, 0.55),
    "caribbean": ((12.0, 17.0), (-75.0, -60.0), 175.0, -0.4, 0.50),
    "gulf": ((18.0, 24.0), (-95.0, -85.0), 95.0, -1.0, 0.35),
    "subtropical": ((25.0, 32.0), (-72.0, -55.0), 60.0, -0.6, 0.60),
}
_MONTH_WEIGHTS = np.array([0.2, 0.1, 0.1, 0.3, 1.0, 3.0, 6.0, 16.0, 32.0, 17.0, 4.0, 0.8])


def _storm(rng: np.random.Generator, year: int, number: int, regime: str,
           with_pressure: bool) -> Storm:
    (la0, la1), (lo0, lo1), heading, turn, speed = REGIMES[regime]
    lat, lon = rng.uniform(la0, la1), rng.uniform(lo0, lo1)
    heading += rng.normal(0.0, 8.0)
    turn += rng.normal(0.0, 0.3)
    n = int(rng.integers(12, 45))
    month = int(rng.choice(12, p=_MONTH_WEIGHTS / _MONTH_WEIGHTS.sum())) + 1
    start = datetime(year, month, int(rng.integers(1, 28)), int(rng.choice([0, 6, 12, 18])))
    peak = rng.uniform(55.0, 140.0)
    peak_at = rng.uniform(0.3, 0.7) * (n - 1)

    points = []
    for i in range(n):
        frac = i / peak_at if i <= peak_at else max(0.0, 1.0 - (i - peak_at) / (n - peak_at))
        wind = int(round(max(25.0, 25.0 + (peak - 25.0) * frac) / 5.0) * 5)
        if i == n - 1 and rng.random() < 0.4:
            status = "EX"
        elif wind >= 64:
            status = "HU"
        elif wind >= 34:
            status = "TS"
        else:
            status = "TD"
        pres = int(round(1010.0 - (wind / 6.7) ** (1 / 0.644))) if with_pressure else None
        points.append(TrackPoint(
            timestamp=start + timedelta(hours=6 * i), record_identifier="",
            status=status, latitude=round(float(np.clip(lat, -89.0, 89.0)), 1),
            longitude=round(float(np.clip(lon, -179.0, 179.0)), 1),
            max_wind=wind, min_pressure=pres))
        rad = np.deg2rad(heading)
        step = speed * (1.0 + 0.6 * max(0.0, lat - 25.0) / 15.0)
        lat += step * np.sin(rad) + rng.normal(0.0, 0.05)
        lon += step * np.cos(rad) + rng.normal(0.0, 0.05)
        if lat > 22.0 or regime != "recurver":
            heading += turn
    return Storm(StormId("AL", number, year), "UNNAMED", tuple(points))


def make_storms(n_storms: int, seed: int = 0, start_year: int = 1990,
                end_year: int = 2021, pressure_from: int = 1900,
                regime_weights: Optional[dict] = None) -> list[Storm]:
    """``n_storms`` synthetic storms spread over ``start_year..end_year``.

    Storms before ``pressure_from`` carry no pressure, as in the early record.
    """
    rng = np.random.default_rng(seed)
    weights = regime_weights or {"recurver": 0.35, "caribbean": 0.25, "gulf": 0.2,
                                 "subtropical": 0.2}
    names = list(weights)
    p = np.array([weights[k] for k in names], dtype=float)
    years = np.sort(rng.integers(start_year, end_year + 1, size=n_storms))
    storms, counters = [], {}
    for year in years:
        year = int(year)
        counters[year] = counters.get(year, 0) + 1
        regime = names[int(rng.choice(len(names), p=p / p.sum()))]
        storms.append(_storm(rng, year, counters[year], regime, year >= pressure_from))
    storms.sort(key=lambda s: (s.points[0].timestamp, s.id.cyclone_number))
    # renumber in genesis order within each year, as the real archive does
    out, counters = [], {}
    for s in storms:
        counters[s.year] = counters.get(s.year, 0) + 1
        out.append(Storm(StormId("AL", counters[s.year], s.year), s.name, s.points))
    return out


def make_archive(n_storms: int, seed: int = 0, **kwargs) -> str:
    return format_archive(make_storms(n_storms, seed, **kwargs))
