"""Message annotation against a port registry, then visits and voyages.

Every message gets either a port id (lowest id wins when registry polygons
overlap) or the open-sea label. Visits are maximal same-port runs per vessel;
voyages connect consecutive visits to different ports.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import (
    AisMessage,
    Port,
    Visit,
    Voyage,
    format_timestamp,
    parse_timestamp,
)
from .errors import CsvParseError, ValidationError

#: Label value for messages outside every port polygon.
SEAPOINT = None


@dataclass(frozen=True, slots=True)
class LabeledMessage:
    """A message plus its resolved location label (port id, or None at sea)."""

    message: AisMessage
    label: int | None


def _points_in_polygon(lons: np.ndarray, lats: np.ndarray, poly) -> np.ndarray:
    """Vectorized twin of core.point_in_polygon (boundary counts as inside)."""
    n = len(poly)
    inside = np.zeros(len(lons), dtype=bool)
    boundary = np.zeros(len(lons), dtype=bool)
    for i in range(n):
        xi, yi = poly[i]
        xj, yj = poly[(i - 1) % n]
        # Boundary: exactly collinear with the edge and within its box.
        cross = (xj - xi) * (lats - yi) - (yj - yi) * (lons - xi)
        on_edge = (
            (cross == 0.0)
            & (lons >= min(xi, xj))
            & (lons <= max(xi, xj))
            & (lats >= min(yi, yj))
            & (lats <= max(yi, yj))
        )
        boundary |= on_edge
        hits = (yi > lats) != (yj > lats)
        if hits.any():
            with np.errstate(divide="ignore", invalid="ignore"):
                x_cross = (xj - xi) * (lats - yi) / (yj - yi) + xi
            inside ^= hits & (lons < x_cross)
    return inside | boundary


def annotate(messages: Sequence[AisMessage], ports: Sequence[Port]) -> list[LabeledMessage]:
    """Label each message with the lowest-id port containing it, else sea."""
    ids = [p.id for p in ports]
    if len(set(ids)) != len(ids):
        raise ValidationError("registry has duplicate port ids")
    if not messages:
        return []
    lons = np.array([m.lon for m in messages])
    lats = np.array([m.lat for m in messages])
    labels = np.full(len(messages), -1, dtype=np.int64)
    for port in sorted(ports, key=lambda p: p.id):
        poly = np.asarray(port.polygon)
        box = (
            (lons >= poly[:, 0].min())
            & (lons <= poly[:, 0].max())
            & (lats >= poly[:, 1].min())
            & (lats <= poly[:, 1].max())
            & (labels == -1)
        )
        cand = np.flatnonzero(box)
        if len(cand) == 0:
            continue
        hit = _points_in_polygon(lons[cand], lats[cand], port.polygon)
        labels[cand[hit]] = port.id
    return [
        LabeledMessage(m, int(lab) if lab >= 0 else SEAPOINT)
        for m, lab in zip(messages, labels)
    ]


def _require_sorted(labeled: Sequence[LabeledMessage]) -> None:
    for a, b in zip(labeled, labeled[1:]):
        ka = (a.message.vessel_id, a.message.timestamp)
        kb = (b.message.vessel_id, b.message.timestamp)
        if ka > kb:
            raise ValidationError(
                "messages must be sorted by (vessel_id, timestamp); "
                f"{ka} precedes {kb}"
            )


def extract_visits(labeled: Sequence[LabeledMessage]) -> list[Visit]:
    """One Visit per maximal same-port run of consecutive messages per vessel."""
    _require_sorted(labeled)
    visits: list[Visit] = []
    run_start = None
    prev = None
    for lm in labeled:
        key = (lm.message.vessel_id, lm.label)
        if prev is None or key != (prev.message.vessel_id, prev.label):
            if prev is not None and prev.label is not SEAPOINT:
                visits.append(
                    Visit(prev.label, prev.message.vessel_id,
                          run_start.message.timestamp, prev.message.timestamp)
                )
            run_start = lm
        prev = lm
    if prev is not None and prev.label is not SEAPOINT:
        visits.append(
            Visit(prev.label, prev.message.vessel_id,
                  run_start.message.timestamp, prev.message.timestamp)
        )
    return visits


def extract_voyages(
    visits: Sequence[Visit], labeled: Sequence[LabeledMessage]
) -> list[Voyage]:
    """Pair consecutive different-port visits per vessel into voyages.

    depart is the first visit's exit, arrive the second visit's entry;
    mean_sog_underway averages the vessel's open-sea messages strictly
    between the two (0 when there are none). Pairs with depart >= arrive
    (possible only with duplicate timestamps) are skipped.
    """
    for a, b in zip(visits, visits[1:]):
        if (a.vessel_id, a.enter_time) > (b.vessel_id, b.enter_time):
            raise ValidationError("visits must be sorted by (vessel_id, enter_time)")

    sea_times: dict[str, list[float]] = {}
    sea_sogs: dict[str, list[float]] = {}
    for lm in labeled:
        if lm.label is SEAPOINT:
            sea_times.setdefault(lm.message.vessel_id, []).append(
                lm.message.timestamp.timestamp()
            )
            sea_sogs.setdefault(lm.message.vessel_id, []).append(lm.message.sog)
    sea_arrays = {
        v: (np.array(ts), np.array(sea_sogs[v])) for v, ts in sea_times.items()
    }
    for v, (ts, _) in sea_arrays.items():
        if np.any(np.diff(ts) < 0):
            raise ValidationError(f"labeled messages for vessel {v!r} are not time-sorted")

    voyages: list[Voyage] = []
    for v1, v2 in zip(visits, visits[1:]):
        if v1.vessel_id != v2.vessel_id or v1.port_id == v2.port_id:
            continue
        depart, arrive = v1.exit_time, v2.enter_time
        if not depart < arrive:
            continue
        mean_sog = 0.0
        if v1.vessel_id in sea_arrays:
            ts, sogs = sea_arrays[v1.vessel_id]
            lo = np.searchsorted(ts, depart.timestamp(), side="right")
            hi = np.searchsorted(ts, arrive.timestamp(), side="left")
            if hi > lo:
                mean_sog = float(sogs[lo:hi].mean())
        voyages.append(
            Voyage(v1.vessel_id, v1.port_id, v2.port_id, depart, arrive, mean_sog)
        )
    return voyages


# --- File interfaces ---------------------------------------------------------

VOYAGE_CSV_HEADER = ("vessel_id", "origin", "dest", "depart", "arrive", "mean_sog_underway")
ANNOTATED_CSV_HEADER = ("vessel_id", "timestamp", "lat", "lon", "sog", "label")
SEA_TOKEN = "sea"


def voyages_to_csv(voyages: Iterable[Voyage]) -> str:
    out = io.StringIO()
    out.write(",".join(VOYAGE_CSV_HEADER) + "\n")
    for v in voyages:
        out.write(
            f"{v.vessel_id},{v.origin_port_id},{v.dest_port_id},"
            f"{format_timestamp(v.depart_time)},{format_timestamp(v.arrive_time)},"
            f"{v.mean_sog_underway!r}\n"
        )
    return out.getvalue()


def voyages_from_csv(text: str) -> list[Voyage]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise CsvParseError("empty file: missing header", line=1) from None
    if tuple(h.strip() for h in header) != VOYAGE_CSV_HEADER:
        raise CsvParseError(
            f"bad header {header!r}: expected {','.join(VOYAGE_CSV_HEADER)}", line=1
        )
    voyages = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 6:
            raise CsvParseError(f"expected 6 fields, got {len(row)}", line=lineno)
        vessel, origin, dest, depart, arrive, sog = (f.strip() for f in row)
        try:
            voyages.append(
                Voyage(
                    vessel,
                    int(origin),
                    int(dest),
                    parse_timestamp(depart),
                    parse_timestamp(arrive),
                    float(sog),
                )
            )
        except (ValueError, ValidationError) as exc:
            raise CsvParseError(f"bad voyage row: {exc}", line=lineno) from None
    return voyages


def annotated_to_csv(labeled: Iterable[LabeledMessage]) -> str:
    out = io.StringIO()
    out.write(",".join(ANNOTATED_CSV_HEADER) + "\n")
    for lm in labeled:
        m = lm.message
        token = SEA_TOKEN if lm.label is SEAPOINT else str(lm.label)
        out.write(
            f"{m.vessel_id},{format_timestamp(m.timestamp)},{m.lat!r},{m.lon!r},"
            f"{m.sog!r},{token}\n"
        )
    return out.getvalue()


def annotated_from_csv(text: str) -> list[LabeledMessage]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise CsvParseError("empty file: missing header", line=1) from None
    if tuple(h.strip() for h in header) != ANNOTATED_CSV_HEADER:
        raise CsvParseError(
            f"bad header {header!r}: expected {','.join(ANNOTATED_CSV_HEADER)}", line=1
        )
    labeled = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 6:
            raise CsvParseError(f"expected 6 fields, got {len(row)}", line=lineno)
        vessel, ts, lat, lon, sog, token = (f.strip() for f in row)
        try:
            message = AisMessage(vessel, parse_timestamp(ts), float(lon), float(lat),
                                 float(sog), source_line=lineno)
            label = SEAPOINT if token == SEA_TOKEN else int(token)
        except (ValueError, ValidationError) as exc:
            raise CsvParseError(f"bad annotated row: {exc}", line=lineno) from None
        if label is not SEAPOINT and label < 0:
            raise CsvParseError(f"bad label {token!r}", line=lineno, field="label")
        labeled.append(LabeledMessage(message, label))
    return labeled
