"""Daily graph snapshots over the port set, with normalization and CV splits.

Each UTC calendar day between the first and last message becomes one
snapshot: per-port activity features, plus an edge for every unordered port
pair connected by a voyage arriving or departing that day. The node set and
ordering are fixed across days; quiet ports are isolated, not dropped.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from datetime import date, datetime, time, timedelta, timezone
from typing import Sequence

import numpy as np

from .core import Port, PortLabel, Voyage, haversine_km
from .errors import ValidationError
from .segmentation import SEAPOINT, LabeledMessage, extract_visits

#: Class indices used by snapshot labels and the model head.
CLASS_ACTUAL = 0
CLASS_GATEWAY = 1

FEATURE_NAMES = (
    "arrivals",
    "departures",
    "waiting_minutes",
    "mean_arrival_sog",
    "mean_inport_sog",
)

Edge = tuple[int, int, float]  # (src_idx, dst_idx, distance_km), src_idx < dst_idx


@dataclass(frozen=True, slots=True)
class GraphSnapshot:
    day: date
    node_ids: tuple[int, ...]
    features: tuple[tuple[float, ...], ...]  # |P| x 5
    edges: tuple[Edge, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        p = len(self.node_ids)
        if len(self.features) != p or len(self.labels) != p:
            raise ValidationError("features and labels must have one row per node")
        for row in self.features:
            if len(row) != len(FEATURE_NAMES):
                raise ValidationError(f"feature rows must have {len(FEATURE_NAMES)} entries")
            if not all(math.isfinite(v) for v in row):
                raise ValidationError("features must be finite")
        for lab in self.labels:
            if lab not in (CLASS_ACTUAL, CLASS_GATEWAY):
                raise ValidationError(f"label {lab} is not a known class index")
        for i, j, d in self.edges:
            if not (0 <= i < p and 0 <= j < p and i < j):
                raise ValidationError(f"edge ({i},{j}) malformed for {p} nodes")
            if not (math.isfinite(d) and d > 0):
                raise ValidationError(f"edge ({i},{j}) distance must be positive")

    def feature_array(self) -> np.ndarray:
        return np.array(self.features, dtype=np.float64)


@dataclass(frozen=True, slots=True)
class Normalization:
    means: tuple[float, ...]
    stds: tuple[float, ...]


@dataclass(frozen=True, slots=True)
class TemporalDataset:
    snapshots: tuple[GraphSnapshot, ...]
    normalization: Normalization | None = None

    def __post_init__(self):
        days = [s.day for s in self.snapshots]
        if any(a >= b for a, b in zip(days, days[1:])):
            raise ValidationError("snapshot days must be strictly increasing")
        orders = {s.node_ids for s in self.snapshots}
        if len(orders) > 1:
            raise ValidationError("all snapshots must share one node ordering")


def _day_of(ts) -> date:
    return ts.astimezone(timezone.utc).date()


def build_snapshots(
    voyages: Sequence[Voyage],
    labeled: Sequence[LabeledMessage],
    ports: Sequence[Port],
) -> list[GraphSnapshot]:
    """One snapshot per UTC day spanned by the messages, inclusive."""
    if not ports:
        raise ValidationError("cannot build snapshots without ports")
    for p in ports:
        if p.label is None:
            raise ValidationError(f"port {p.id} has no label; snapshots need labeled ports")
    if not labeled:
        return []
    ordered = sorted(ports, key=lambda p: p.id)
    node_ids = tuple(p.id for p in ordered)
    index_of = {pid: i for i, pid in enumerate(node_ids)}
    labels = tuple(
        CLASS_ACTUAL if p.label == PortLabel.ACTUAL else CLASS_GATEWAY for p in ordered
    )
    centroids = {p.id: p.centroid for p in ordered}

    first = min(_day_of(lm.message.timestamp) for lm in labeled)
    last = max(_day_of(lm.message.timestamp) for lm in labeled)
    n_days = (last - first).days + 1
    day_index = {first + timedelta(days=k): k for k in range(n_days)}
    n_ports = len(node_ids)

    arrivals = np.zeros((n_days, n_ports))
    departures = np.zeros((n_days, n_ports))
    waiting = np.zeros((n_days, n_ports))
    arrival_sog_sum = np.zeros((n_days, n_ports))
    inport_sog_sum = np.zeros((n_days, n_ports))
    inport_count = np.zeros((n_days, n_ports))
    edge_days: dict[int, set[tuple[int, int]]] = {}

    for v in voyages:
        for pid, day, bucket in (
            (v.dest_port_id, _day_of(v.arrive_time), arrivals),
            (v.origin_port_id, _day_of(v.depart_time), departures),
        ):
            if pid not in index_of:
                raise ValidationError(f"voyage references unknown port {pid}")
            if day in day_index:
                bucket[day_index[day], index_of[pid]] += 1
        if _day_of(v.arrive_time) in day_index:
            d = day_index[_day_of(v.arrive_time)]
            arrival_sog_sum[d, index_of[v.dest_port_id]] += v.mean_sog_underway
        a, b = index_of[v.origin_port_id], index_of[v.dest_port_id]
        pair = (min(a, b), max(a, b))
        for day in {_day_of(v.depart_time), _day_of(v.arrive_time)}:
            if day in day_index:
                edge_days.setdefault(day_index[day], set()).add(pair)

    for visit in extract_visits(labeled):
        # Spread the visit interval across the days it overlaps.
        enter, exit_ = visit.enter_time, visit.exit_time
        day = _day_of(enter)
        while day <= _day_of(exit_):
            day_start = datetime.combine(day, time(), tzinfo=timezone.utc)
            day_end = day_start + timedelta(days=1)
            lo = max(enter, day_start)
            hi = min(exit_, day_end)
            if day in day_index:
                seconds = (hi - lo).total_seconds()
                waiting[day_index[day], index_of[visit.port_id]] += seconds / 60.0
            day = day + timedelta(days=1)

    for lm in labeled:
        if lm.label is SEAPOINT:
            continue
        d = day_index[_day_of(lm.message.timestamp)]
        inport_sog_sum[d, index_of[lm.label]] += lm.message.sog
        inport_count[d, index_of[lm.label]] += 1

    with np.errstate(invalid="ignore"):
        mean_arrival = np.where(arrivals > 0, arrival_sog_sum / np.maximum(arrivals, 1), 0.0)
        mean_inport = np.where(inport_count > 0, inport_sog_sum / np.maximum(inport_count, 1),
                               0.0)

    snapshots = []
    for k in range(n_days):
        edges = []
        for a, b in sorted(edge_days.get(k, ())):
            dist = haversine_km(centroids[node_ids[a]], centroids[node_ids[b]])
            if dist <= 0:
                raise ValidationError(
                    f"ports {node_ids[a]} and {node_ids[b]} share a centroid; "
                    "edge distance must be positive"
                )
            edges.append((a, b, dist))
        feats = tuple(
            (
                float(arrivals[k, i]),
                float(departures[k, i]),
                float(waiting[k, i]),
                float(mean_arrival[k, i]),
                float(mean_inport[k, i]),
            )
            for i in range(n_ports)
        )
        snapshots.append(
            GraphSnapshot(
                day=first + timedelta(days=k),
                node_ids=node_ids,
                features=feats,
                edges=tuple(edges),
                labels=labels,
            )
        )
    return snapshots


def normalize(dataset: TemporalDataset, train_cutoff_index: int) -> TemporalDataset:
    """Z-score all snapshots using mean/std of the first train_cutoff_index.

    Standard deviation is the population one; zero spread maps to divisor 1.
    """
    n = len(dataset.snapshots)
    if not 0 < train_cutoff_index <= n:
        raise ValidationError(
            f"train cutoff must be in [1, {n}], got {train_cutoff_index}"
        )
    train = np.concatenate(
        [s.feature_array() for s in dataset.snapshots[:train_cutoff_index]], axis=0
    )
    means = train.mean(axis=0)
    stds = train.std(axis=0)  # population std
    stds = np.where(stds == 0.0, 1.0, stds)
    out = []
    for s in dataset.snapshots:
        feats = (s.feature_array() - means) / stds
        out.append(replace(s, features=tuple(tuple(float(v) for v in row) for row in feats)))
    return TemporalDataset(
        snapshots=tuple(out),
        normalization=Normalization(tuple(float(m) for m in means),
                                    tuple(float(sd) for sd in stds)),
    )


def apply_normalization(snapshot: GraphSnapshot, norm: Normalization) -> GraphSnapshot:
    """Scale one unseen snapshot with stored training statistics."""
    feats = (snapshot.feature_array() - np.array(norm.means)) / np.array(norm.stds)
    return replace(
        snapshot, features=tuple(tuple(float(v) for v in row) for row in feats)
    )


def time_series_splits(n_snapshots: int, n_splits: int = 8) -> list[tuple[range, range]]:
    """Expanding-window folds: fold k trains on the first k blocks, validates on the next."""
    if n_splits < 1:
        raise ValidationError(f"n_splits must be >= 1, got {n_splits}")
    if n_snapshots < n_splits + 1:
        raise ValidationError(
            f"need at least {n_splits + 1} snapshots for {n_splits} splits, got {n_snapshots}"
        )
    block = n_snapshots // (n_splits + 1)
    return [
        (range(0, k * block), range(k * block, (k + 1) * block))
        for k in range(1, n_splits + 1)
    ]


# --- Snapshot file interface -------------------------------------------------
#
# Newline-delimited JSON, one snapshot per line:
# {"day": "YYYY-MM-DD", "node_ids": [...], "features": [[...]], "edges":
# [[src, dst, km], ...], "labels": [...]}. Serialization is bit-exact for
# identical inputs (floats use shortest round-trip form).


def snapshots_to_ndjson(snapshots: Sequence[GraphSnapshot]) -> str:
    lines = []
    for s in snapshots:
        lines.append(
            json.dumps(
                {
                    "day": s.day.isoformat(),
                    "node_ids": list(s.node_ids),
                    "features": [list(row) for row in s.features],
                    "edges": [[i, j, d] for i, j, d in s.edges],
                    "labels": list(s.labels),
                },
                separators=(",", ":"),
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")


def snapshots_from_ndjson(text: str) -> list[GraphSnapshot]:
    snapshots = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
            snapshots.append(
                GraphSnapshot(
                    day=date.fromisoformat(payload["day"]),
                    node_ids=tuple(int(i) for i in payload["node_ids"]),
                    features=tuple(
                        tuple(float(v) for v in row) for row in payload["features"]
                    ),
                    edges=tuple(
                        (int(i), int(j), float(d)) for i, j, d in payload["edges"]
                    ),
                    labels=tuple(int(v) for v in payload["labels"]),
                )
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise ValidationError(f"snapshot line {lineno} malformed: {exc}") from None
    return snapshots
