"""
Reader and writer for NOAA HURDAT2 best-track archives.

A HURDAT2 file is a sequence of storm blocks. Each block starts with a header
line ``BBNNYYYY, NAME, COUNT,`` and is followed by ``COUNT`` six-hourly data
lines::

    AL092011,              IRENE,     39,
    20110821, 0000,  , TS, 15.0N,  59.0W,  45, 1006,  105,    0,    0,   45, ...

Latitude and longitude carry hemisphere suffixes; they are converted to signed
degrees (south and west negative). The -99/-999 sentinels are mapped to None.
"""

from __future__ import annotations

import csv
import io
import logging
import sys
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, TextIO, Union

LOGGER = logging.getLogger(__name__)

MISSING_SENTINELS = {"-99", "-999"}
HURRICANE_STATUSES = frozenset({"HU"})

# date, time, record id, status, lat, lon, wind, pressure + 12 wind radii [+ RMW]
_BASE_FIELDS = 20
_RMW_FIELDS = 21


class HurdatError(ValueError):
    """Base class for archive format problems."""


class HurdatParseError(HurdatError):
    """A line could not be decoded. Carries the 1-based line and column."""

    def __init__(self, message: str, line: int, column: Optional[int] = None):
        self.line = line
        self.column = column
        where = f"line {line}" if column is None else f"line {line}, column {column}"
        super().__init__(f"{where}: {message}")


class HurdatStructureError(HurdatError):
    """A storm block is inconsistent with its header."""

    def __init__(self, message: str, storm_id: str):
        self.storm_id = storm_id
        super().__init__(f"{storm_id}: {message}")


@dataclass(frozen=True, order=True)
class StormId:
    basin: str
    cyclone_number: int
    year: int

    def __post_init__(self):
        if len(self.basin) != 2 or not self.basin.isalpha():
            raise ValueError(f"basin must be a 2-letter code, got {self.basin!r}")
        if not 1 <= self.cyclone_number <= 99:
            raise ValueError(f"cyclone number out of range: {self.cyclone_number}")
        if not 1851 <= self.year <= 2100:
            raise ValueError(f"year out of range: {self.year}")

    @classmethod
    def parse(cls, text: str) -> "StormId":
        text = text.strip()
        if len(text) != 8 or not text[2:].isdigit():
            raise ValueError(f"malformed storm id {text!r}")
        return cls(text[:2].upper(), int(text[2:4]), int(text[4:]))

    def __str__(self) -> str:
        return f"{self.basin}{self.cyclone_number:02d}{self.year:04d}"


@dataclass(frozen=True)
class TrackPoint:
    timestamp: datetime
    record_identifier: str
    status: str
    latitude: float
    longitude: float
    max_wind: Optional[int]
    min_pressure: Optional[int]
    # opaque pass-through, no downstream stage reads these
    wind_radii: tuple = field(default=("-999",) * 12, repr=False)
    rmw: Optional[str] = field(default=None, repr=False)


@dataclass(frozen=True)
class Storm:
    id: StormId
    name: str
    points: tuple

    def __post_init__(self):
        if not self.points:
            raise HurdatStructureError("storm has no track points", str(self.id))

    @property
    def year(self) -> int:
        return self.id.year

    def has_status(self, statuses: Iterable[str]) -> bool:
        statuses = set(statuses)
        return any(p.status in statuses for p in self.points)

    def __len__(self) -> int:
        return len(self.points)


def _split_fields(line: str) -> list[tuple[str, int]]:
    """Split on commas, returning (stripped field, 1-based start column)."""
    out = []
    col = 0
    for raw in line.split(","):
        lead = len(raw) - len(raw.lstrip())
        out.append((raw.strip(), col + lead + 1))
        col += len(raw) + 1
    # the trailing comma yields one empty field
    if len(out) > 1 and out[-1][0] == "":
        out.pop()
    return out


def _parse_coord(text: str, positive: str, negative: str, limit: float,
                 lineno: int, column: int) -> float:
    if len(text) < 2 or text[-1].upper() not in (positive, negative):
        raise HurdatParseError(f"bad coordinate {text!r}", lineno, column)
    try:
        value = float(text[:-1])
    except ValueError:
        raise HurdatParseError(f"bad coordinate {text!r}", lineno, column) from None
    if text[-1].upper() == negative:
        value = -value
    if not -limit <= value <= limit:
        raise HurdatParseError(f"coordinate out of range {text!r}", lineno, column)
    return value


def _parse_optional_int(text: str, lineno: int, column: int) -> Optional[int]:
    if text == "" or text in MISSING_SENTINELS:
        return None
    try:
        return int(text)
    except ValueError:
        raise HurdatParseError(f"expected integer, got {text!r}", lineno, column) from None


def _parse_data_line(line: str, lineno: int) -> TrackPoint:
    fields = _split_fields(line)
    if len(fields) not in (_BASE_FIELDS, _RMW_FIELDS):
        raise HurdatParseError(
            f"data line has {len(fields)} fields, expected {_BASE_FIELDS} or {_RMW_FIELDS}",
            lineno)
    (date, c_date), (hhmm, c_time) = fields[0], fields[1]
    try:
        if len(date) != 8 or len(hhmm) != 4:
            raise ValueError
        timestamp = datetime(int(date[:4]), int(date[4:6]), int(date[6:]),
                             int(hhmm[:2]), int(hhmm[2:]))
    except ValueError:
        raise HurdatParseError(f"bad date/time {date!r} {hhmm!r}", lineno, c_date) from None

    lat = _parse_coord(fields[4][0], "N", "S", 90.0, lineno, fields[4][1])
    lon = _parse_coord(fields[5][0], "E", "W", 180.0, lineno, fields[5][1])
    return TrackPoint(
        timestamp=timestamp,
        record_identifier=fields[2][0],
        status=fields[3][0],
        latitude=lat,
        longitude=lon,
        max_wind=_parse_optional_int(fields[6][0], lineno, fields[6][1]),
        min_pressure=_parse_optional_int(fields[7][0], lineno, fields[7][1]),
        wind_radii=tuple(f for f, _ in fields[8:20]),
        rmw=fields[20][0] if len(fields) == _RMW_FIELDS else None,
    )


def _iter_lines(text: Union[str, Iterable[str]]) -> Iterator[str]:
    if isinstance(text, str):
        yield from text.splitlines()
    else:
        for line in text:
            yield line.rstrip("\r\n")


def parse_archive(text: Union[str, Iterable[str]]) -> list[Storm]:
    """Parse a HURDAT2 archive.

    Parameters
    ----------
    text : str or iterable of str
        Whole file contents, or any iterable of lines (e.g. an open file).

    Returns
    -------
    list of Storm
        Storms in file order.

    Raises
    ------
    HurdatParseError
        Malformed header or data line; carries the line number.
    HurdatStructureError
        A block's data-line count differs from its header count.
    """
    storms: list[Storm] = []
    header = None  # (storm id, name, expected count, header line number)
    points: list[TrackPoint] = []

    def close_block():
        sid, name, expected, _ = header
        if len(points) != expected:
            raise HurdatStructureError(
                f"header declares {expected} entries, found {len(points)}", str(sid))
        for a, b in zip(points, points[1:]):
            if b.timestamp <= a.timestamp:
                raise HurdatStructureError(
                    f"timestamps not increasing at {b.timestamp:%Y%m%d %H%M}", str(sid))
        storms.append(Storm(sid, name, tuple(points)))

    for lineno, line in enumerate(_iter_lines(text), start=1):
        if not line.strip():
            continue
        if header is not None and len(points) < header[2]:
            if len(_split_fields(line)) == 3:
                raise HurdatStructureError(
                    f"header declares {header[2]} entries, found {len(points)}",
                    str(header[0]))
            points.append(_parse_data_line(line, lineno))
            continue
        if header is not None:
            close_block()
        fields = _split_fields(line)
        if len(fields) != 3:
            if header is not None and len(fields) in (_BASE_FIELDS, _RMW_FIELDS):
                raise HurdatStructureError(
                    f"header declares {header[2]} entries, found more", str(header[0]))
            raise HurdatParseError(
                f"header has {len(fields)} fields, expected 3", lineno)
        try:
            sid = StormId.parse(fields[0][0])
        except ValueError as exc:
            raise HurdatParseError(str(exc), lineno, fields[0][1]) from None
        try:
            count = int(fields[2][0])
        except ValueError:
            raise HurdatParseError(f"bad entry count {fields[2][0]!r}", lineno,
                                   fields[2][1]) from None
        header = (sid, fields[1][0].upper() or "UNNAMED", count, lineno)
        points = []

    if header is not None:
        close_block()
    return storms


def read_archive(path: Union[str, Path, TextIO]) -> list[Storm]:
    """Parse an archive from a path, ``"-"`` for stdin, or an open text stream."""
    if hasattr(path, "read"):
        return parse_archive(path)
    if str(path) == "-":
        return parse_archive(sys.stdin)
    with open(path, encoding="ascii", errors="strict") as fh:
        return parse_archive(fh)


def filter_hurricanes(storms: Sequence[Storm], year_lo: int, year_hi: int,
                      statuses: Iterable[str] = HURRICANE_STATUSES) -> list[Storm]:
    """Storms from ``year_lo..year_hi`` (inclusive) that reached any of ``statuses``.

    Order of the input is preserved.
    """
    if year_lo > year_hi:
        raise ValueError(f"year_lo ({year_lo}) > year_hi ({year_hi})")
    statuses = frozenset(statuses)
    return [s for s in storms
            if year_lo <= s.id.year <= year_hi and s.has_status(statuses)]


def _fmt_coord(value: float, positive: str, negative: str, width: int) -> str:
    hemi = negative if value < 0 else positive
    return f"{abs(value):.1f}{hemi}".rjust(width)


def _fmt_optional(value: Optional[int], missing: str, width: int) -> str:
    return (missing if value is None else str(value)).rjust(width)


def format_storm(storm: Storm) -> str:
    """Serialize one storm block in HURDAT2 layout (trailing newline included)."""
    lines = [f"{storm.id},{storm.name:>19},{len(storm.points):>7},"]
    for p in storm.points:
        cols = [
            p.timestamp.strftime("%Y%m%d"),
            p.timestamp.strftime(" %H%M"),
            p.record_identifier.rjust(2),
            p.status.rjust(3),
            _fmt_coord(p.latitude, "N", "S", 6),
            _fmt_coord(p.longitude, "E", "W", 7),
            _fmt_optional(p.max_wind, "-99", 4),
            _fmt_optional(p.min_pressure, "-999", 5),
        ]
        cols += [r.rjust(5) for r in p.wind_radii]
        if p.rmw is not None:
            cols.append(p.rmw.rjust(5))
        lines.append(",".join(cols) + ",")
    return "\n".join(lines) + "\n"


def format_archive(storms: Iterable[Storm]) -> str:
    return "".join(format_storm(s) for s in storms)


def write_storm_summary(storms: Iterable[Storm], out: TextIO) -> None:
    """One CSV row per storm: identity, extent and peak intensity."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["storm_id", "name", "year", "n_points", "start", "end",
                     "start_lat", "start_lon", "max_wind", "min_pressure"])
    for s in storms:
        winds = [p.max_wind for p in s.points if p.max_wind is not None]
        pres = [p.min_pressure for p in s.points if p.min_pressure is not None]
        first, last = s.points[0], s.points[-1]
        writer.writerow([
            str(s.id), s.name, s.id.year, len(s.points),
            first.timestamp.strftime("%Y-%m-%dT%H:%M"),
            last.timestamp.strftime("%Y-%m-%dT%H:%M"),
            first.latitude, first.longitude,
            max(winds) if winds else "", min(pres) if pres else "",
        ])


def write_track_points(storms: Iterable[Storm], out: TextIO) -> None:
    """Long-format CSV of every track point (storm_id, index, time, lat, lon, ...)."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["storm_id", "index", "time", "status", "lat", "lon",
                     "max_wind", "min_pressure"])
    for s in storms:
        for i, p in enumerate(s.points):
            writer.writerow([
                str(s.id), i, p.timestamp.strftime("%Y-%m-%dT%H:%M"), p.status,
                p.latitude, p.longitude,
                "" if p.max_wind is None else p.max_wind,
                "" if p.min_pressure is None else p.min_pressure,
            ])


def storms_to_csv(storms: Iterable[Storm]) -> str:
    buf = io.StringIO()
    write_storm_summary(storms, buf)
    return buf.getvalue()
