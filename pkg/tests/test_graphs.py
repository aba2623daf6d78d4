"""Daily snapshots: feature accounting, edges, normalization, CV splits."""

from datetime import date, datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from portgraph.core import AisMessage, Port, PortLabel, Voyage, haversine_km
from portgraph.errors import ValidationError
from portgraph.graphs import (
    CLASS_ACTUAL,
    CLASS_GATEWAY,
    GraphSnapshot,
    Normalization,
    TemporalDataset,
    apply_normalization,
    build_snapshots,
    normalize,
    snapshots_from_ndjson,
    snapshots_to_ndjson,
    time_series_splits,
)
from portgraph.segmentation import SEAPOINT, LabeledMessage

UTC = timezone.utc
T0 = datetime(2024, 3, 1, tzinfo=UTC)


def square(cx, cy, half=0.01):
    return ((cx - half, cy - half), (cx + half, cy - half),
            (cx + half, cy + half), (cx - half, cy + half))


PORT_A = Port(0, (0.0, 0.0), square(0.0, 0.0), PortLabel.ACTUAL)
PORT_B = Port(1, (1.0, 1.0), square(1.0, 1.0), PortLabel.GATEWAY)
PORTS = [PORT_A, PORT_B]


def lm(lon, lat, minutes, sog=0.2, vessel="v", label=SEAPOINT):
    m = AisMessage(vessel, T0 + timedelta(minutes=minutes), lon, lat, sog)
    return LabeledMessage(m, label)


def mk_snapshot(day_offset, feats, edges=(), labels=(0, 1)):
    return GraphSnapshot(
        day=date(2024, 3, 1) + timedelta(days=day_offset),
        node_ids=(0, 1),
        features=feats,
        edges=edges,
        labels=labels,
    )


class TestBuildSnapshots:
    def test_quiet_port_has_zero_features(self):
        labeled = [lm(0.0, 0.0, 0, label=0), lm(0.0, 0.0, 10, label=0)]
        snaps = build_snapshots([], labeled, PORTS)
        assert len(snaps) == 1
        assert snaps[0].features[1] == (0.0, 0.0, 0.0, 0.0, 0.0)

    def test_midnight_crossing_voyage_splits_days(self):
        depart = datetime(2024, 3, 1, 23, 50, tzinfo=UTC)
        arrive = datetime(2024, 3, 2, 0, 10, tzinfo=UTC)
        voyage = Voyage("v", 0, 1, depart, arrive, 9.0)
        labeled = [
            lm(0.0, 0.0, 23 * 60 + 45, label=0),
            lm(1.0, 1.0, 24 * 60 + 15, label=1, sog=0.1),
        ]
        snaps = build_snapshots([voyage], labeled, PORTS)
        assert len(snaps) == 2
        day1, day2 = snaps
        a, b = 0, 1  # node indices
        assert day1.features[a][1] == 1.0  # departure counted on day 1
        assert day1.features[b][0] == 0.0  # arrival NOT on day 1
        assert day2.features[b][0] == 1.0  # arrival on day 2
        assert day2.features[b][3] == pytest.approx(9.0)  # mean arrival sog
        # The edge appears on both days, stored once as (0, 1).
        for snap in snaps:
            assert len(snap.edges) == 1
            i, j, d = snap.edges[0]
            assert (i, j) == (0, 1)
            assert d == pytest.approx(haversine_km(PORT_A.centroid, PORT_B.centroid))

    def test_waiting_minutes_interval_length(self):
        labeled = [lm(0.0, 0.0, 10 * 60, label=0), lm(0.0, 0.0, 11 * 60 + 30, label=0)]
        snaps = build_snapshots([], labeled, PORTS)
        assert snaps[0].features[0][2] == pytest.approx(90.0)

    def test_waiting_minutes_split_across_midnight(self):
        labeled = [lm(0.0, 0.0, 23 * 60, label=0), lm(0.0, 0.0, 25 * 60, label=0)]
        snaps = build_snapshots([], labeled, PORTS)
        assert snaps[0].features[0][2] == pytest.approx(60.0)
        assert snaps[1].features[0][2] == pytest.approx(60.0)

    def test_mean_inport_sog(self):
        labeled = [lm(0.0, 0.0, 0, sog=0.1, label=0), lm(0.0, 0.0, 5, sog=0.3, label=0)]
        snaps = build_snapshots([], labeled, PORTS)
        assert snaps[0].features[0][4] == pytest.approx(0.2)

    def test_empty_day_between_activity(self):
        labeled = [lm(0.5, 0.5, 0), lm(0.5, 0.5, 2 * 24 * 60)]  # sea fixes the span
        snaps = build_snapshots([], labeled, PORTS)
        assert [s.day.day for s in snaps] == [1, 2, 3]
        assert snaps[1].features[0] == (0.0, 0.0, 0.0, 0.0, 0.0)
        assert snaps[1].edges == ()

    def test_multi_day_visit_spreads_waiting_time(self):
        labeled = [lm(0.0, 0.0, 0, label=0), lm(0.0, 0.0, 2 * 24 * 60, label=0)]
        snaps = build_snapshots([], labeled, PORTS)
        assert [s.features[0][2] for s in snaps] == pytest.approx([1440.0, 1440.0, 0.0])

    def test_unlabeled_port_rejected(self):
        bare = Port(2, (2.0, 2.0), square(2.0, 2.0))
        with pytest.raises(ValidationError):
            build_snapshots([], [lm(0.0, 0.0, 0)], PORTS + [bare])

    def test_labels_follow_port_kind(self):
        labeled = [lm(0.0, 0.0, 0, label=0)]
        snaps = build_snapshots([], labeled, PORTS)
        assert snaps[0].labels == (CLASS_ACTUAL, CLASS_GATEWAY)
        assert snaps[0].node_ids == (0, 1)

    def test_arrival_departure_totals_match_voyages(self):
        rng = np.random.default_rng(0)
        voyages = []
        t = T0
        for _ in range(30):
            t += timedelta(hours=float(rng.uniform(1, 30)))
            dur = timedelta(hours=float(rng.uniform(1, 20)))
            o, d = (0, 1) if rng.random() < 0.5 else (1, 0)
            voyages.append(Voyage("v", o, d, t, t + dur, float(rng.uniform(5, 12))))
            t += dur
        labeled = [lm(0.0, 0.0, 0, label=0),
                   lm(0.0, 0.0, int((t - T0).total_seconds() / 60) + 60, label=0)]
        snaps = build_snapshots(voyages, labeled, PORTS)
        arr = np.array([s.feature_array()[:, 0] for s in snaps]).sum(axis=0)
        dep = np.array([s.feature_array()[:, 1] for s in snaps]).sum(axis=0)
        assert arr[0] == sum(1 for v in voyages if v.dest_port_id == 0)
        assert arr[1] == sum(1 for v in voyages if v.dest_port_id == 1)
        assert dep[0] == sum(1 for v in voyages if v.origin_port_id == 0)
        assert dep[1] == sum(1 for v in voyages if v.origin_port_id == 1)

    def test_waiting_total_matches_visit_durations(self):
        labeled = []
        expect_minutes = 0.0
        clock = 0
        for k in range(5):
            stay = 37 * (k + 1)
            labeled.append(lm(0.0, 0.0, clock, label=0))
            labeled.append(lm(0.0, 0.0, clock + stay, label=0))
            expect_minutes += stay
            clock += stay + 1  # a gap message breaks the run
            labeled.append(lm(0.5, 0.5, clock))
            clock += 1
        snaps = build_snapshots([], labeled, PORTS)
        total = sum(s.features[0][2] for s in snaps)
        assert total == pytest.approx(expect_minutes)

    def test_no_messages_no_snapshots(self):
        assert build_snapshots([], [], PORTS) == []


class TestSnapshotValidation:
    def test_feature_row_count(self):
        with pytest.raises(ValidationError):
            mk_snapshot(0, ((0.0,) * 5,))

    def test_edge_bounds_and_direction(self):
        feats = ((0.0,) * 5, (0.0,) * 5)
        with pytest.raises(ValidationError):
            mk_snapshot(0, feats, edges=((1, 0, 5.0),))
        with pytest.raises(ValidationError):
            mk_snapshot(0, feats, edges=((0, 2, 5.0),))
        with pytest.raises(ValidationError):
            mk_snapshot(0, feats, edges=((0, 1, 0.0),))

    def test_bad_label(self):
        with pytest.raises(ValidationError):
            mk_snapshot(0, ((0.0,) * 5, (0.0,) * 5), labels=(0, 7))

    def test_dataset_ordering(self):
        s0 = mk_snapshot(0, ((0.0,) * 5, (0.0,) * 5))
        s1 = mk_snapshot(1, ((0.0,) * 5, (0.0,) * 5))
        TemporalDataset((s0, s1))
        with pytest.raises(ValidationError):
            TemporalDataset((s1, s0))
        with pytest.raises(ValidationError):
            TemporalDataset((s0, s0))

    def test_dataset_node_order_consistency(self):
        s0 = mk_snapshot(0, ((0.0,) * 5, (0.0,) * 5))
        s1 = GraphSnapshot(date(2024, 3, 2), (1, 0), ((0.0,) * 5, (0.0,) * 5), (), (1, 0))
        with pytest.raises(ValidationError):
            TemporalDataset((s0, s1))


class TestNormalize:
    def _dataset(self, columns):
        snaps = tuple(
            mk_snapshot(k, ((float(v),) * 5, (float(v),) * 5))
            for k, v in enumerate(columns)
        )
        return TemporalDataset(snaps)

    def test_constant_column_becomes_zero(self):
        ds = normalize(self._dataset([3, 3, 3]), train_cutoff_index=3)
        for s in ds.snapshots:
            assert all(v == 0.0 for row in s.features for v in row)
        assert ds.normalization.stds == (1.0,) * 5

    def test_two_point_column(self):
        ds = normalize(self._dataset([0, 2]), train_cutoff_index=2)
        assert ds.snapshots[0].features[0][0] == pytest.approx(-1.0)
        assert ds.snapshots[1].features[0][0] == pytest.approx(1.0)

    def test_cutoff_zero_rejected(self):
        with pytest.raises(ValidationError):
            normalize(self._dataset([0, 1]), train_cutoff_index=0)

    def test_stats_come_from_training_rows_only(self):
        ds = self._dataset([0, 2, 100])
        out = normalize(ds, train_cutoff_index=2)
        # Training stats: mean 1, std 1. The held-out snapshot scales with
        # them, not with stats over all three days.
        assert out.snapshots[2].features[0][0] == pytest.approx(99.0)
        all_mean = np.array([0, 2, 100]).mean()
        assert out.normalization.means[0] != pytest.approx(all_mean)

    def test_apply_normalization_uses_stored_stats(self):
        norm = Normalization(means=(1.0,) * 5, stds=(2.0,) * 5)
        snap = mk_snapshot(0, ((3.0,) * 5, (5.0,) * 5))
        out = apply_normalization(snap, norm)
        assert out.features[0] == (1.0,) * 5
        assert out.features[1] == (2.0,) * 5


class TestTimeSeriesSplits:
    def test_nine_snapshots_eight_splits(self):
        splits = time_series_splits(9, 8)
        assert len(splits) == 8
        assert splits[0] == (range(0, 1), range(1, 2))
        assert splits[7] == (range(0, 8), range(8, 9))

    def test_eighteen_snapshots_eight_splits(self):
        splits = time_series_splits(18, 8)
        assert splits[0] == (range(0, 2), range(2, 4))
        assert splits[7] == (range(0, 16), range(16, 18))

    def test_too_few_snapshots(self):
        with pytest.raises(ValidationError):
            time_series_splits(8, 8)

    @given(st.integers(9, 400), st.integers(1, 8))
    @settings(max_examples=120)
    def test_train_always_precedes_val(self, n, k):
        if n < k + 1:
            return
        for train, val in time_series_splits(n, k):
            assert len(train) > 0 and len(val) > 0
            assert max(train) < min(val)
            assert train[0] == 0  # expanding window anchored at the start


class TestNdjson:
    def _snaps(self):
        return [
            mk_snapshot(0, ((0.5, 1.0, 90.0, 7.25, 0.125), (0.0,) * 5),
                        edges=((0, 1, 156.9035),)),
            mk_snapshot(1, ((0.0,) * 5, (1.0, 0.0, 3.0, 0.1, 0.2))),
        ]

    def test_round_trip(self):
        snaps = self._snaps()
        text = snapshots_to_ndjson(snaps)
        assert snapshots_from_ndjson(text) == snaps

    def test_bit_exact_reserialization(self):
        snaps = self._snaps()
        text = snapshots_to_ndjson(snaps)
        assert snapshots_to_ndjson(snapshots_from_ndjson(text)) == text

    def test_one_line_per_snapshot(self):
        text = snapshots_to_ndjson(self._snaps())
        assert len(text.strip().splitlines()) == 2

    def test_malformed_line(self):
        with pytest.raises(ValidationError):
            snapshots_from_ndjson('{"day": "2024-03-01"}\n')
        with pytest.raises(ValidationError):
            snapshots_from_ndjson("not json\n")

    def test_empty_text(self):
        assert snapshots_from_ndjson("") == []
