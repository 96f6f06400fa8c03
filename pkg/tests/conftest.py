import os
import re
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings, strategies as st

from stormsynth.hurdat2 import Storm, StormId, TrackPoint

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

DATA = Path(__file__).parent / "data"
FIXTURE_ARCHIVE = DATA / "fixture_50.txt"
FIXTURE_CONFIG = DATA / "fixture.cfg"
DEFAULT_ARCHIVE = Path(__file__).parents[1] / "data" / "hurdat2-atlantic.txt"


def archive_path():
    """Location of the public Atlantic archive, or None when it is not on disk."""
    path = Path(os.environ.get("HURDAT2_ARCHIVE", DEFAULT_ARCHIVE))
    return path if path.is_file() else None


@pytest.fixture(scope="session")
def fixture_storms():
    from stormsynth.hurdat2 import read_archive
    return read_archive(FIXTURE_ARCHIVE)


def make_storm(latlon, pressures=None, statuses=None, number=1, year=2000,
               start=None, winds=None):
    start = start or datetime(year, 8, 1)
    n = len(latlon)
    pts = []
    for i, (lat, lon) in enumerate(latlon):
        pts.append(TrackPoint(
            timestamp=start + timedelta(hours=6 * i), record_identifier="",
            status=(statuses[i] if statuses else "HU"),
            latitude=float(lat), longitude=float(lon),
            max_wind=(winds[i] if winds else 80),
            min_pressure=(pressures[i] if pressures else 980)))
    assert len(pts) == n
    return Storm(StormId("AL", number, year), "TEST", tuple(pts))


# ----------------------------------------------------------------- strategies

def _tenths(lo, hi):
    return st.integers(int(lo * 10), int(hi * 10)).map(lambda v: v / 10)


@st.composite
def track_points(draw, n_min=1, n_max=12):
    n = draw(st.integers(n_min, n_max))
    start = datetime(2000, 1, 1) + timedelta(hours=6 * draw(st.integers(0, 4000)))
    steps = draw(st.lists(st.integers(1, 8), min_size=n, max_size=n))
    t = start
    pts = []
    for step in steps:
        radii = tuple(str(v) for v in draw(st.lists(
            st.sampled_from([-999, 0, 30, 45, 120]), min_size=12, max_size=12)))
        pts.append(TrackPoint(
            timestamp=t,
            record_identifier=draw(st.sampled_from(["", "L", "I", "W"])),
            status=draw(st.sampled_from(["HU", "TS", "TD", "EX", "LO", "SS"])),
            latitude=draw(_tenths(-90, 90)),
            longitude=draw(_tenths(-180, 180)),
            max_wind=draw(st.none() | st.integers(10, 185)),
            min_pressure=draw(st.none() | st.integers(870, 1030)),
            wind_radii=radii,
            rmw=draw(st.none() | st.sampled_from(["-999", "15", "40"])),
        ))
        t = t + timedelta(hours=6 * step)
    return tuple(pts)


@st.composite
def storms(draw, max_points=12):
    pts = draw(track_points(n_max=max_points))
    sid = StormId(draw(st.sampled_from(["AL", "EP", "CP"])), draw(st.integers(1, 99)),
                  pts[0].timestamp.year)
    name = draw(st.text("ABCDEFGHIJKLMNOPQRSTUVWXYZ-", min_size=1, max_size=12))
    return Storm(sid, name, pts)


def polylines(min_size=2, max_size=15):
    """(m, 3) lat/lon/pressure arrays with bounded coordinates."""
    coord = st.floats(-60, 60, allow_nan=False, allow_subnormal=False)
    row = st.tuples(coord, coord, st.floats(900, 1010, allow_nan=False))
    return st.lists(row, min_size=min_size, max_size=max_size).map(
        lambda rows: np.array(rows, dtype=float))


# ------------------------------------------------------- acceptance summary

_CRITERION = re.compile(r"test_acceptance\.py::test_c(\d+)_")
_acceptance_results: dict = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    entry = _acceptance_results.setdefault(int(m.group(1)), {"passed": 0, "failed": []})
    if report.failed:
        entry["failed"].append(report.nodeid.rsplit("::", 1)[1])
    elif report.when == "call" and report.passed:
        entry["passed"] += 1
    elif report.skipped:
        entry["failed"].append(report.nodeid.rsplit("::", 1)[1] + " (skipped)")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    from test_acceptance import CRITERIA
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        entry = _acceptance_results.get(n)
        if entry is None:
            continue
        status = "FAIL" if entry["failed"] or not entry["passed"] else "PASS"
        detail = f"  failing: {', '.join(entry['failed'])}" if entry["failed"] else ""
        terminalreporter.write_line(f"criterion {n:2d} ({CRITERIA[n]}): {status}{detail}")
