"""Domain types shared by every stage, plus geodesic and polygon primitives.

Coordinates are (lon, lat) degrees in EPSG:4326 throughout; timestamps are
timezone-aware UTC with second precision; speed over ground stays in knots
as transmitted by AIS and is never converted internally.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Sequence

from .errors import CsvParseError, DegenerateGeometryError, ValidationError

#: IUGG mean Earth radius, kilometers.
EARTH_RADIUS_KM = 6371.0088

AIS_CSV_HEADER = ("vessel_id", "timestamp", "lat", "lon", "sog")

Coord = tuple[float, float]  # (lon, lat) degrees


def _check_lon_lat(lon: float, lat: float, context: str = "coordinate") -> None:
    if not (math.isfinite(lon) and -180.0 <= lon <= 180.0):
        raise ValidationError(f"{context}: lon {lon!r} outside [-180, 180]")
    if not (math.isfinite(lat) and -90.0 <= lat <= 90.0):
        raise ValidationError(f"{context}: lat {lat!r} outside [-90, 90]")


def _as_utc(ts: datetime) -> datetime:
    if ts.tzinfo is None:
        raise ValidationError(f"timestamp {ts!r} must be timezone-aware")
    return ts.astimezone(timezone.utc)


@dataclass(frozen=True, slots=True)
class AisMessage:
    """One timestamped vessel report."""

    vessel_id: str
    timestamp: datetime
    lon: float
    lat: float
    sog: float
    #: 1-based line number in the source file, kept for diagnostics only.
    source_line: int | None = field(default=None, compare=False)

    def __post_init__(self):
        _check_lon_lat(self.lon, self.lat, "AisMessage")
        if not (math.isfinite(self.sog) and self.sog >= 0.0):
            raise ValidationError(f"AisMessage: sog {self.sog!r} must be finite and >= 0")
        object.__setattr__(self, "timestamp", _as_utc(self.timestamp))


@dataclass(frozen=True, slots=True)
class Trajectory:
    """Time-ordered track of one vessel: (lon, lat, timestamp) points."""

    vessel_id: str
    points: tuple[tuple[float, float, datetime], ...]

    def __post_init__(self):
        for lon, lat, _ in self.points:
            _check_lon_lat(lon, lat, "Trajectory point")
        times = [p[2] for p in self.points]
        if any(a > b for a, b in zip(times, times[1:])):
            raise ValidationError("Trajectory timestamps must be non-decreasing")

    @classmethod
    def from_messages(cls, messages: Sequence[AisMessage]) -> "Trajectory":
        vessels = {m.vessel_id for m in messages}
        if len(vessels) != 1:
            raise ValidationError(f"Trajectory requires a single vessel, got {sorted(vessels)!r}")
        return cls(
            vessel_id=messages[0].vessel_id,
            points=tuple((m.lon, m.lat, m.timestamp) for m in messages),
        )


class PortLabel(enum.Enum):
    ACTUAL = "actual"
    GATEWAY = "gateway"


@dataclass(frozen=True, slots=True)
class Port:
    """An extracted port: centroid plus a simple polygon region around it."""

    id: int
    centroid: Coord
    polygon: tuple[Coord, ...]
    label: PortLabel | None = None

    def __post_init__(self):
        if self.id < 0:
            raise ValidationError(f"Port id must be non-negative, got {self.id}")
        _check_lon_lat(*self.centroid, context=f"Port {self.id} centroid")
        if len(self.polygon) < 3:
            raise DegenerateGeometryError(f"Port {self.id}: polygon needs >= 3 vertices")
        for v in self.polygon:
            _check_lon_lat(*v, context=f"Port {self.id} vertex")
        if not _ring_is_simple(self.polygon):
            raise ValidationError(f"Port {self.id}: polygon is self-intersecting")
        if not point_in_polygon(self.centroid, self.polygon):
            raise ValidationError(f"Port {self.id}: polygon does not contain its centroid")


@dataclass(frozen=True, slots=True)
class Visit:
    """Maximal interval a vessel's messages stay inside one port polygon."""

    port_id: int
    vessel_id: str
    enter_time: datetime
    exit_time: datetime

    def __post_init__(self):
        object.__setattr__(self, "enter_time", _as_utc(self.enter_time))
        object.__setattr__(self, "exit_time", _as_utc(self.exit_time))
        if self.enter_time > self.exit_time:
            raise ValidationError("Visit: enter_time must be <= exit_time")


@dataclass(frozen=True, slots=True)
class Voyage:
    """Passage between two consecutive visits to different ports by one vessel."""

    vessel_id: str
    origin_port_id: int
    dest_port_id: int
    depart_time: datetime
    arrive_time: datetime
    mean_sog_underway: float

    def __post_init__(self):
        if self.origin_port_id == self.dest_port_id:
            raise ValidationError("Voyage: origin and destination must differ")
        object.__setattr__(self, "depart_time", _as_utc(self.depart_time))
        object.__setattr__(self, "arrive_time", _as_utc(self.arrive_time))
        if not self.depart_time < self.arrive_time:
            raise ValidationError("Voyage: depart_time must precede arrive_time")
        if not (math.isfinite(self.mean_sog_underway) and self.mean_sog_underway >= 0.0):
            raise ValidationError("Voyage: mean_sog_underway must be finite and >= 0")


def haversine_km(a: Coord, b: Coord) -> float:
    """Great-circle distance in km between two (lon, lat) points on the mean sphere."""
    _check_lon_lat(*a, context="haversine a")
    _check_lon_lat(*b, context="haversine b")
    lon1, lat1 = math.radians(a[0]), math.radians(a[1])
    lon2, lat2 = math.radians(b[0]), math.radians(b[1])
    s = (
        math.sin((lat2 - lat1) / 2.0) ** 2
        + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2.0) ** 2
    )
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(s)))


def _on_segment(p: Coord, a: Coord, b: Coord) -> bool:
    # Exact-arithmetic boundary test: collinear and within the bounding box.
    cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
    if cross != 0.0:
        return False
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])


def point_in_polygon(pt: Coord, poly: Sequence[Coord]) -> bool:
    """True iff pt is inside or on the boundary of the ring (boundary counts as inside)."""
    if len(poly) < 3:
        raise DegenerateGeometryError(f"polygon needs >= 3 vertices, got {len(poly)}")
    x, y = pt
    n = len(poly)
    for i in range(n):
        if _on_segment(pt, poly[i], poly[(i + 1) % n]):
            return True
    inside = False
    j = n - 1
    for i in range(n):
        xi, yi = poly[i]
        xj, yj = poly[j]
        if (yi > y) != (yj > y):
            x_cross = (xj - xi) * (y - yi) / (yj - yi) + xi
            if x < x_cross:
                inside = not inside
        j = i
    return inside


def _segments_cross(a: Coord, b: Coord, c: Coord, d: Coord) -> bool:
    def orient(p, q, r):
        v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
        return 0 if v == 0 else (1 if v > 0 else -1)

    o1, o2 = orient(a, b, c), orient(a, b, d)
    o3, o4 = orient(c, d, a), orient(c, d, b)
    if o1 != o2 and o3 != o4:
        return True
    return (
        (o1 == 0 and _on_segment(c, a, b))
        or (o2 == 0 and _on_segment(d, a, b))
        or (o3 == 0 and _on_segment(a, c, d))
        or (o4 == 0 and _on_segment(b, c, d))
    )


def _ring_is_simple(poly: Sequence[Coord]) -> bool:
    """No two non-adjacent edges intersect; adjacent edges meet only at the shared vertex."""
    n = len(poly)
    edges = [(poly[i], poly[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        a, b = edges[i]
        if a == b:
            return False
        for j in range(i + 1, n):
            c, d = edges[j]
            adjacent = j == i + 1 or (i == 0 and j == n - 1)
            if adjacent:
                continue
            if _segments_cross(a, b, c, d):
                return False
    return True


# --- AIS CSV interface -----------------------------------------------------
#
# Format: UTF-8, header `vessel_id,timestamp,lat,lon,sog`, timestamps ISO-8601
# `YYYY-MM-DDTHH:MM:SSZ`. Rows may arrive in any order; the parsed list is
# sorted by (vessel_id, timestamp).


_TIMESTAMP_RE = re.compile(r"\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z\Z")


def parse_timestamp(raw: str) -> datetime:
    # fromisoformat is much faster than strptime; the regex pins the shape
    # (fromisoformat alone would accept fractional seconds, offsets, ...).
    if not _TIMESTAMP_RE.match(raw):
        raise ValidationError(f"bad timestamp {raw!r}: expected YYYY-MM-DDTHH:MM:SSZ")
    try:
        ts = datetime.fromisoformat(raw[:-1])
    except ValueError as exc:
        raise ValidationError(f"bad timestamp {raw!r}: {exc}") from None
    return ts.replace(tzinfo=timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return _as_utc(ts).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_ais_csv(source: bytes | str | io.TextIOBase) -> list[AisMessage]:
    """Parse an AIS CSV stream into messages sorted by (vessel_id, timestamp).

    Raises CsvParseError naming the offending field and 1-based line number;
    a header-only file yields an empty list.
    """
    if isinstance(source, bytes):
        text = io.StringIO(source.decode("utf-8"))
    elif isinstance(source, str):
        text = io.StringIO(source)
    else:
        text = source
    reader = csv.reader(text)
    try:
        header = next(reader)
    except StopIteration:
        raise CsvParseError("empty file: missing header", line=1) from None
    if tuple(h.strip() for h in header) != AIS_CSV_HEADER:
        raise CsvParseError(
            f"bad header {header!r}: expected {','.join(AIS_CSV_HEADER)}", line=1
        )
    messages: list[AisMessage] = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise CsvParseError(f"expected 5 fields, got {len(row)}", line=lineno)
        vessel_id, ts_raw, lat_raw, lon_raw, sog_raw = (f.strip() for f in row)
        if not vessel_id:
            raise CsvParseError("empty vessel_id", line=lineno, field="vessel_id")
        try:
            ts = parse_timestamp(ts_raw)
        except ValidationError as exc:
            raise CsvParseError(str(exc), line=lineno, field="timestamp") from None
        values = {}
        for name, raw in (("lat", lat_raw), ("lon", lon_raw), ("sog", sog_raw)):
            try:
                values[name] = float(raw)
            except ValueError:
                raise CsvParseError(f"bad {name} {raw!r}", line=lineno, field=name) from None
        lat, lon, sog = values["lat"], values["lon"], values["sog"]
        if not (math.isfinite(lat) and -90.0 <= lat <= 90.0):
            raise CsvParseError(f"lat {lat!r} outside [-90, 90]", line=lineno, field="lat")
        if not (math.isfinite(lon) and -180.0 <= lon <= 180.0):
            raise CsvParseError(f"lon {lon!r} outside [-180, 180]", line=lineno, field="lon")
        if not (math.isfinite(sog) and sog >= 0.0):
            raise CsvParseError(f"sog {sog!r} must be >= 0", line=lineno, field="sog")
        messages.append(
            AisMessage(vessel_id=vessel_id, timestamp=ts, lon=lon, lat=lat, sog=sog,
                       source_line=lineno)
        )
    messages.sort(key=lambda m: (m.vessel_id, m.timestamp))
    return messages


def write_ais_csv(messages: Iterable[AisMessage]) -> str:
    """Serialize messages to the AIS CSV format; floats keep full precision."""
    out = io.StringIO()
    out.write(",".join(AIS_CSV_HEADER) + "\n")
    for m in messages:
        out.write(
            f"{m.vessel_id},{format_timestamp(m.timestamp)},{m.lat!r},{m.lon!r},{m.sog!r}\n"
        )
    return out.getvalue()
