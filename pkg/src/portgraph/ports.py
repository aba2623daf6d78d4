"""Port discovery: density clustering of stationary AIS points, hull geometry.

Clustering runs in the raw lon/lat plane with Euclidean distances in degrees,
so eps is a degree value, not a metric one. Discovered regions are buffered
convex hulls; regions that touch are merged until all are pairwise disjoint.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .core import AisMessage, Coord, Port, PortLabel, point_in_polygon
from .errors import DegenerateGeometryError, ValidationError

#: Label for points not assigned to any cluster.
NOISE = -1

DEFAULT_SOG_MAX = 0.5  # knots; above this a vessel is considered underway
DEFAULT_BUFFER = 0.001  # degrees added around every hull


@dataclass(frozen=True, slots=True)
class DbscanParams:
    """eps is Euclidean in the lon/lat plane, in degrees."""

    eps: float = 0.005
    min_pts: int = 20

    def __post_init__(self):
        if not (math.isfinite(self.eps) and self.eps > 0):
            raise ValidationError(f"eps must be positive, got {self.eps!r}")
        if self.min_pts < 1:
            raise ValidationError(f"min_pts must be >= 1, got {self.min_pts}")


def select_stationary_points(
    messages: Sequence[AisMessage], sog_max: float = DEFAULT_SOG_MAX
) -> list[AisMessage]:
    """Keep messages with sog <= sog_max, preserving order."""
    if sog_max < 0:
        raise ValidationError(f"sog_max must be >= 0, got {sog_max}")
    return [m for m in messages if m.sog <= sog_max]


def dbscan(points: Sequence[Coord] | np.ndarray, params: DbscanParams) -> np.ndarray:
    """Density-based clustering; returns one label per point (NOISE = -1).

    Core point: >= min_pts neighbors within eps, counting itself. Clusters are
    the eps-connected components of the core points, numbered from 0 in order
    of first core encounter (ascending input index). Border points (non-core
    within eps of a core) take the cluster of their lowest-index core
    neighbor. Everything else is noise.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return labels
    if pts.ndim != 2 or pts.shape[1] != 2 or not np.all(np.isfinite(pts)):
        raise ValidationError("dbscan expects finite points of shape (n, 2)")
    eps = params.eps

    tree = cKDTree(pts)
    if params.min_pts <= 1:
        core = np.ones(n, dtype=bool)
    else:
        k = min(params.min_pts, n)
        dk = tree.query(pts, k=k, workers=-1)[0][:, -1] if k > 1 else np.zeros(n)
        core = (dk <= eps) & (params.min_pts <= n)

    # Connect cores through an eps-sized grid: any neighbor within eps lives
    # in the 3x3 cell block. Claimed points leave their home cell so dense
    # blobs cost one vectorized sweep instead of one sweep per member.
    core_idx = np.flatnonzero(core)
    cells: dict[tuple[int, int], list[int]] = {}
    cell_of = {}
    for i in core_idx:
        key = (int(math.floor(pts[i, 0] / eps)), int(math.floor(pts[i, 1] / eps)))
        cells.setdefault(key, []).append(int(i))
        cell_of[int(i)] = key

    next_cluster = 0
    for seed in core_idx:
        seed = int(seed)
        if labels[seed] != NOISE:
            continue
        labels[seed] = next_cluster
        cells[cell_of[seed]].remove(seed)
        queue = deque([seed])
        while queue:
            p = queue.popleft()
            cx, cy = cell_of[p]
            for key in (
                (cx + dx, cy + dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)
            ):
                bucket = cells.get(key)
                if not bucket:
                    continue
                cand = np.array(bucket)
                d2 = ((pts[cand] - pts[p]) ** 2).sum(axis=1)
                hit = cand[d2 <= eps * eps]
                if len(hit):
                    labels[hit] = next_cluster
                    queue.extend(int(h) for h in hit)
                    keep = [i for i in bucket if labels[i] == NOISE]
                    if keep:
                        cells[key] = keep
                    else:
                        del cells[key]
        next_cluster += 1

    # Border pass: non-core points adopt their lowest-index core neighbor.
    if len(core_idx) and len(core_idx) < n:
        non_core = np.flatnonzero(~core)
        core_tree = cKDTree(pts[core_idx])
        hits = core_tree.query_ball_point(pts[non_core], r=eps)
        for pos, neighbor_rows in zip(non_core, hits):
            if neighbor_rows:
                labels[pos] = labels[core_idx[min(neighbor_rows)]]
    return labels


def _cross(o: Coord, a: Coord, b: Coord) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: Sequence[Coord] | np.ndarray) -> tuple[Coord, ...]:
    """Monotone-chain convex hull as a CCW ring without a closing duplicate.

    Collinear points on hull edges are dropped. Fewer than 3 distinct points
    or an entirely collinear set raises DegenerateGeometryError.
    """
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValidationError("convex_hull expects points of shape (n, 2)")
    unique = sorted({(float(x), float(y)) for x, y in arr})
    if len(unique) < 3:
        raise DegenerateGeometryError(f"hull needs >= 3 distinct points, got {len(unique)}")

    def half(seq: list[Coord]) -> list[Coord]:
        out: list[Coord] = []
        for p in seq:
            while len(out) >= 2 and _cross(out[-2], out[-1], p) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = half(unique)
    upper = half(unique[::-1])
    ring = tuple(lower[:-1] + upper[:-1])
    if len(ring) < 3:
        raise DegenerateGeometryError("all points are collinear")
    return ring


def buffer_ring(ring: Sequence[Coord], buffer: float = DEFAULT_BUFFER) -> tuple[Coord, ...]:
    """Push each vertex `buffer` degrees further out along its centroid ray."""
    if buffer < 0:
        raise ValidationError(f"buffer must be >= 0, got {buffer}")
    if buffer == 0:
        return tuple((float(x), float(y)) for x, y in ring)
    cx = sum(v[0] for v in ring) / len(ring)
    cy = sum(v[1] for v in ring) / len(ring)
    out = []
    for x, y in ring:
        d = math.hypot(x - cx, y - cy)
        if d == 0:
            raise DegenerateGeometryError("ring vertex coincides with its centroid")
        scale = 1.0 + buffer / d
        out.append((cx + (x - cx) * scale, cy + (y - cy) * scale))
    return tuple(out)


def _square_ring(center: Coord, half_side: float) -> tuple[Coord, ...]:
    x, y = center
    return (
        (x - half_side, y - half_side),
        (x + half_side, y - half_side),
        (x + half_side, y + half_side),
        (x - half_side, y + half_side),
    )


def _region_polygon(cluster_pts: np.ndarray, buffer: float) -> tuple[Coord, ...]:
    centroid = (float(cluster_pts[:, 0].mean()), float(cluster_pts[:, 1].mean()))
    try:
        return buffer_ring(convex_hull(cluster_pts), buffer)
    except DegenerateGeometryError:
        return _square_ring(centroid, buffer)


def _convex_polygons_intersect(a: Sequence[Coord], b: Sequence[Coord]) -> bool:
    """Separating-axis test; touching boundaries count as intersecting."""
    for poly1, poly2 in ((a, b), (b, a)):
        n = len(poly1)
        for i in range(n):
            x1, y1 = poly1[i]
            x2, y2 = poly1[(i + 1) % n]
            ax, ay = y1 - y2, x2 - x1  # edge normal
            proj1 = [ax * x + ay * y for x, y in poly1]
            proj2 = [ax * x + ay * y for x, y in poly2]
            if max(proj1) < min(proj2) or max(proj2) < min(proj1):
                return False
    return True


def extract_ports(
    messages: Sequence[AisMessage],
    params: DbscanParams | None = None,
    sog_max: float = DEFAULT_SOG_MAX,
    buffer: float = DEFAULT_BUFFER,
) -> list[Port]:
    """Full discovery pipeline: filter, cluster, hull, buffer, merge.

    Clusters whose buffered hulls intersect are merged (hull of the combined
    point sets, re-buffered) until all regions are pairwise disjoint. Port ids
    are 0..k-1 ordered by the smallest original cluster id in each region.
    """
    params = params or DbscanParams()
    stationary = select_stationary_points(messages, sog_max)
    if not stationary:
        return []
    pts = np.array([(m.lon, m.lat) for m in stationary], dtype=np.float64)
    labels = dbscan(pts, params)
    n_clusters = int(labels.max()) + 1 if len(labels) else 0
    if n_clusters == 0:
        return []

    regions: list[tuple[int, np.ndarray, tuple[Coord, ...]]] = []
    for cid in range(n_clusters):
        cluster_pts = pts[labels == cid]
        regions.append((cid, cluster_pts, _region_polygon(cluster_pts, buffer)))

    merged = True
    while merged:
        merged = False
        for i in range(len(regions)):
            for j in range(i + 1, len(regions)):
                if _convex_polygons_intersect(regions[i][2], regions[j][2]):
                    rank = min(regions[i][0], regions[j][0])
                    combined = np.vstack([regions[i][1], regions[j][1]])
                    replacement = (rank, combined, _region_polygon(combined, buffer))
                    regions = [r for k, r in enumerate(regions) if k not in (i, j)]
                    regions.append(replacement)
                    regions.sort(key=lambda r: r[0])
                    merged = True
                    break
            if merged:
                break

    ports = []
    for new_id, (_, cluster_pts, polygon) in enumerate(sorted(regions, key=lambda r: r[0])):
        centroid = (float(cluster_pts[:, 0].mean()), float(cluster_pts[:, 1].mean()))
        ports.append(Port(id=new_id, centroid=centroid, polygon=polygon))
    return ports


# --- Registry file interface -------------------------------------------------
#
# JSON array of {id, centroid: [lon, lat], polygon: [[lon, lat], ...],
# label: "actual" | "gateway" | null}.


def registry_to_json(ports: Sequence[Port]) -> str:
    seen = set()
    for p in ports:
        if p.id in seen:
            raise ValidationError(f"duplicate port id {p.id} in registry")
        seen.add(p.id)
    payload = [
        {
            "id": p.id,
            "centroid": [p.centroid[0], p.centroid[1]],
            "polygon": [[x, y] for x, y in p.polygon],
            "label": p.label.value if p.label is not None else None,
        }
        for p in ports
    ]
    return json.dumps(payload, indent=2) + "\n"


def registry_from_json(text: str | bytes) -> list[Port]:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"registry is not valid JSON: {exc}") from exc
    if not isinstance(payload, list):
        raise ValidationError("registry JSON must be an array of port objects")
    ports = []
    seen = set()
    for entry in payload:
        try:
            pid = int(entry["id"])
            centroid = (float(entry["centroid"][0]), float(entry["centroid"][1]))
            polygon = tuple((float(x), float(y)) for x, y in entry["polygon"])
            raw_label = entry.get("label")
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ValidationError(f"malformed registry entry {entry!r}") from exc
        label = PortLabel(raw_label) if raw_label is not None else None
        if pid in seen:
            raise ValidationError(f"duplicate port id {pid} in registry")
        seen.add(pid)
        ports.append(Port(id=pid, centroid=centroid, polygon=polygon, label=label))
    return ports


def transfer_labels(
    extracted: Sequence[Port],
    truth: Sequence[Port],
    max_distance_deg: float = 0.01,
) -> list[Port]:
    """Copy labels from a ground-truth registry onto extracted ports.

    Matching is one-to-one by nearest centroid within max_distance_deg
    (Euclidean in degrees). Any unmatched or doubly-matched port is an error,
    so a silent count mismatch cannot slip through.
    """
    if len(extracted) != len(truth):
        raise ValidationError(
            f"cannot transfer labels: {len(extracted)} extracted ports vs {len(truth)} true ports"
        )
    taken: dict[int, int] = {}
    labeled = []
    for port in extracted:
        best = None
        best_d = math.inf
        for t in truth:
            d = math.hypot(port.centroid[0] - t.centroid[0], port.centroid[1] - t.centroid[1])
            if d < best_d:
                best, best_d = t, d
        assert best is not None
        if best_d > max_distance_deg:
            raise ValidationError(
                f"extracted port {port.id} has no true port within {max_distance_deg} deg "
                f"(nearest is {best_d:.4f} deg away)"
            )
        if best.id in taken:
            raise ValidationError(
                f"true port {best.id} matched by extracted ports {taken[best.id]} and {port.id}"
            )
        taken[best.id] = port.id
        labeled.append(Port(id=port.id, centroid=port.centroid, polygon=port.polygon,
                            label=best.label))
    return labeled
