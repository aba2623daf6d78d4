"""Deterministic synthetic AIS scenarios with labeled ground-truth ports.

Vessels shuttle between randomly placed ports. A subset of ports are
waiting regions placed near a parent port; before entering a parent, a
vessel usually queues at the waiting region first, and queue stays run a
configurable multiple of a normal call. Positions are emitted on a fixed
report grid with Gaussian jitter, and each message's speed over ground is
derived from the jittered displacement, so reported speed and position are
consistent by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .core import EARTH_RADIUS_KM, Port, PortLabel
from .errors import ValidationError

KNOT_KMH = 1.852
SCENARIO_START = datetime(2024, 1, 1, tzinfo=timezone.utc)
_PLACEMENT_ATTEMPTS = 1000

#: Gaussian position jitter, degrees: broad underway, tight while moored.
UNDERWAY_NOISE_DEG = 0.0005
DWELL_NOISE_DEG = 0.00002

#: Half-side of the square ground-truth region around each port center.
TRUTH_HALF_SIDE_DEG = 0.002


@dataclass(frozen=True, slots=True)
class ScenarioConfig:
    n_actual_ports: int = 10
    n_gateway_ports: int = 5
    n_vessels: int = 10
    days: int = 120
    report_interval: int = 60  # seconds between position reports
    seed: int = 7
    region: tuple[float, float, float, float] = (-64.0, 44.0, -63.0, 45.0)
    dwell_multiplier: float = 4.0  # queue stays vs a normal port call
    placement_radius: float = 0.02  # deg, waiting region offset from parent
    gateway_visit_prob: float = 0.8
    mean_dwell_hours: float = 10.0
    cruise_speed_kn: float = 10.0
    long_stay_prob: float = 0.1  # chance a normal call runs multiplier times longer
    #: Trailing actual ports whose calls always run multiplier times longer.
    #: They look like waiting regions day after day, so the classes stay
    #: genuinely ambiguous and validation loss bottoms out instead of
    #: shrinking forever.
    n_congested_ports: int = 1

    def __post_init__(self):
        if min(self.n_actual_ports, self.n_gateway_ports, self.n_vessels) < 1:
            raise ValidationError("port and vessel counts must be >= 1")
        if self.n_gateway_ports > self.n_actual_ports:
            raise ValidationError("cannot pair more waiting regions than parent ports")
        if self.days < 1:
            raise ValidationError(f"need at least 1 day, got {self.days}")
        if self.report_interval < 1:
            raise ValidationError("report_interval must be >= 1 second")
        lon_min, lat_min, lon_max, lat_max = self.region
        if not (lon_min < lon_max and lat_min < lat_max):
            raise ValidationError(f"malformed region box {self.region}")
        if self.dwell_multiplier < 1.0:
            raise ValidationError("dwell_multiplier must be >= 1")
        if self.placement_radius <= 0:
            raise ValidationError("placement_radius must be positive")
        if not 0.0 <= self.gateway_visit_prob <= 1.0:
            raise ValidationError("gateway_visit_prob must be in [0, 1]")
        if self.mean_dwell_hours <= 0 or self.cruise_speed_kn <= 0:
            raise ValidationError("dwell hours and cruise speed must be positive")
        if not 0.0 <= self.long_stay_prob <= 1.0:
            raise ValidationError("long_stay_prob must be in [0, 1]")
        if not 0 <= self.n_congested_ports <= self.n_actual_ports:
            raise ValidationError(
                "n_congested_ports must be between 0 and n_actual_ports"
            )


def _square(center: tuple[float, float], half: float) -> tuple[tuple[float, float], ...]:
    lon, lat = center
    return (
        (lon - half, lat - half), (lon + half, lat - half),
        (lon + half, lat + half), (lon - half, lat + half),
    )


def _place_centers(config: ScenarioConfig, rng: np.random.Generator):
    """Rejection-sample port centers: parents keep 5 radii apart, waiting
    regions sit 0.6-1.0 radii from a random parent and at least half a
    radius from every other center."""
    lon_min, lat_min, lon_max, lat_max = config.region
    inset = 2.0 * config.placement_radius
    if lon_max - lon_min <= 2 * inset or lat_max - lat_min <= 2 * inset:
        raise ValidationError("region too small for the placement radius")
    min_sep = 5.0 * config.placement_radius

    actual: list[tuple[float, float]] = []
    for _ in range(config.n_actual_ports):
        for _ in range(_PLACEMENT_ATTEMPTS):
            cand = (
                float(rng.uniform(lon_min + inset, lon_max - inset)),
                float(rng.uniform(lat_min + inset, lat_max - inset)),
            )
            if all(math.dist(cand, c) >= min_sep for c in actual):
                actual.append(cand)
                break
        else:
            raise ValidationError(
                f"could not place {config.n_actual_ports} ports at separation "
                f"{min_sep} in {config.region} after {_PLACEMENT_ATTEMPTS} attempts"
            )

    gateways: list[tuple[float, float]] = []
    parents: list[int] = []
    for _ in range(config.n_gateway_ports):
        for _ in range(_PLACEMENT_ATTEMPTS):
            parent = int(rng.integers(0, config.n_actual_ports))
            angle = float(rng.uniform(0.0, 2.0 * math.pi))
            dist = float(rng.uniform(0.6, 1.0)) * config.placement_radius
            base = actual[parent]
            cand = (base[0] + dist * math.cos(angle), base[1] + dist * math.sin(angle))
            others = actual[:parent] + actual[parent + 1:] + gateways
            if all(math.dist(cand, c) >= config.placement_radius / 2 for c in others):
                gateways.append(cand)
                parents.append(parent)
                break
        else:
            raise ValidationError(
                "could not place a waiting region; region too crowded"
            )
    return actual, gateways, parents


def scenario_ports(config: ScenarioConfig,
                   rng: np.random.Generator | None = None) -> tuple[list[Port], list[int]]:
    """Ground-truth registry plus each waiting region's parent port index."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    actual, gateways, parents = _place_centers(config, rng)
    ports = [
        Port(id=i, centroid=c, polygon=_square(c, TRUTH_HALF_SIDE_DEG),
             label=PortLabel.ACTUAL)
        for i, c in enumerate(actual)
    ]
    ports += [
        Port(id=len(actual) + i, centroid=c, polygon=_square(c, TRUTH_HALF_SIDE_DEG),
             label=PortLabel.GATEWAY)
        for i, c in enumerate(gateways)
    ]
    return ports, parents


def _haversine_rows(lat: np.ndarray, lon: np.ndarray) -> np.ndarray:
    """Great-circle km between consecutive rows of equally long lat/lon arrays."""
    p = np.radians(lat)
    q = np.radians(lon)
    dp = p[1:] - p[:-1]
    dq = q[1:] - q[:-1]
    a = np.sin(dp / 2.0) ** 2 + np.cos(p[:-1]) * np.cos(p[1:]) * np.sin(dq / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.clip(np.sqrt(a), 0.0, 1.0))


class _Itinerary:
    """Piecewise-linear movement plan for one vessel: cruise and dwell legs."""

    def __init__(self):
        self.t0: list[float] = []
        self.t1: list[float] = []
        self.start: list[tuple[float, float]] = []
        self.end: list[tuple[float, float]] = []
        self.dwell: list[bool] = []

    def add(self, t0, t1, start, end, dwell):
        self.t0.append(t0)
        self.t1.append(t1)
        self.start.append(start)
        self.end.append(end)
        self.dwell.append(dwell)


def _plan_vessel(config: ScenarioConfig, rng: np.random.Generator,
                 centers: list[tuple[float, float]], parents: list[int],
                 horizon: float) -> _Itinerary:
    n_actual = config.n_actual_ports
    by_parent: dict[int, list[int]] = {}
    for g, parent in enumerate(parents):
        by_parent.setdefault(parent, []).append(n_actual + g)

    def dwell_seconds(mean_hours: float) -> float:
        # lognormal with unit mean so the configured mean is the true mean
        return mean_hours * 3600.0 * float(rng.lognormal(mean=-0.18, sigma=0.6))

    congested_from = n_actual - config.n_congested_ports

    def call_dwell(port_idx: int) -> float:
        mean = config.mean_dwell_hours
        if port_idx >= n_actual or port_idx >= congested_from:
            mean *= config.dwell_multiplier
        elif rng.random() < config.long_stay_prob:
            mean *= config.dwell_multiplier
        return dwell_seconds(mean)

    plan = _Itinerary()
    here = int(rng.integers(0, n_actual))
    pos = centers[here]
    t = 0.0
    first_stay = call_dwell(here)
    plan.add(t, t + first_stay, pos, pos, True)
    t += first_stay

    while t < horizon:
        choices = [i for i in range(n_actual) if i != here]
        dest = int(choices[rng.integers(0, len(choices))])
        stops: list[tuple[int, float]] = []
        queue = by_parent.get(dest)
        if queue and rng.random() < config.gateway_visit_prob:
            gate = int(queue[rng.integers(0, len(queue))])
            stops.append((gate, call_dwell(gate)))
        stops.append((dest, call_dwell(dest)))

        for port_idx, stay in stops:
            target = centers[port_idx]
            leg_km = _haversine_rows(
                np.array([pos[1], target[1]]), np.array([pos[0], target[0]])
            )[0]
            speed_kn = config.cruise_speed_kn * float(rng.uniform(0.8, 1.2))
            travel = leg_km / (speed_kn * KNOT_KMH) * 3600.0
            plan.add(t, t + travel, pos, target, False)
            t += travel
            pos = target
            plan.add(t, t + stay, pos, pos, True)
            t += stay
        here = dest
    return plan


def _render_messages(config: ScenarioConfig, rng: np.random.Generator,
                     plan: _Itinerary, n_reports: int):
    """Sample the itinerary on the report grid and add position jitter."""
    interval = float(config.report_interval)
    lon = np.empty(n_reports)
    lat = np.empty(n_reports)
    for t0, t1, start, end, dwell in zip(plan.t0, plan.t1, plan.start,
                                         plan.end, plan.dwell):
        k0 = int(math.ceil(t0 / interval))
        if k0 * interval < t0:  # guard against float round-down
            k0 += 1
        k1 = min(int(math.ceil(t1 / interval)), n_reports)
        if k0 >= k1:
            continue
        ks = np.arange(k0, k1)
        frac = (ks * interval - t0) / (t1 - t0)
        sigma = DWELL_NOISE_DEG if dwell else UNDERWAY_NOISE_DEG
        lon[k0:k1] = start[0] + frac * (end[0] - start[0]) + rng.normal(0, sigma, len(ks))
        lat[k0:k1] = start[1] + frac * (end[1] - start[1]) + rng.normal(0, sigma, len(ks))
    km = _haversine_rows(lat, lon)
    sog = np.empty(n_reports)
    sog[0] = 0.0
    sog[1:] = km / (interval / 3600.0) / KNOT_KMH
    return lon, lat, sog


def generate(config: ScenarioConfig) -> tuple[str, list[Port]]:
    """Full scenario: AIS CSV text plus the labeled ground-truth registry.

    Deterministic in the seed, byte for byte. Messages come out grouped by
    vessel and time-ordered within each vessel.
    """
    rng = np.random.default_rng(config.seed)
    ports, parents = scenario_ports(config, rng)
    centers = [p.centroid for p in ports]

    horizon = config.days * 86400.0
    n_reports = int(horizon // config.report_interval)
    base = np.datetime64(SCENARIO_START.replace(tzinfo=None), "s")
    stamp_cache = np.datetime_as_string(
        base + (np.arange(n_reports) * config.report_interval).astype("timedelta64[s]"),
        unit="s",
    )

    lines = ["vessel_id,timestamp,lat,lon,sog"]
    for v in range(config.n_vessels):
        vid = f"v{v:02d}"
        plan = _plan_vessel(config, rng, centers, parents, horizon)
        lon, lat, sog = _render_messages(config, rng, plan, n_reports)
        lines.extend(
            f"{vid},{ts}Z,{la:.6f},{lo:.6f},{sg:.3f}"
            for ts, la, lo, sg in zip(stamp_cache, lat, lon, sog)
        )
    return "\n".join(lines) + "\n", ports
