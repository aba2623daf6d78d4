"""Optimizer math, early stopping semantics, determinism, checkpoints."""

from datetime import date, timedelta

import numpy as np
import pytest

from portgraph.engine.autodiff import Tensor, slice_rows
from portgraph.engine.model import (
    TrainConfig,
    init_parameters,
    model_forward,
    predict,
    weighted_cross_entropy,
)
from portgraph.engine.training import (
    ADAM_EPS,
    EpochRecord,
    FoldResult,
    OptimizerState,
    adam_step,
    checkpoint_from_json,
    checkpoint_to_json,
    train,
    train_fold,
)
from portgraph.errors import NumericError, ValidationError
from portgraph.graphs import GraphSnapshot, TemporalDataset, apply_normalization


def leaf(values, name="p"):
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=True, name=name)


def make_snapshot(day_offset, feature_rows, labels, edges=()):
    rows = tuple(tuple(list(r) + [0.0] * (5 - len(r))) for r in feature_rows)
    return GraphSnapshot(
        day=date(2024, 6, 1) + timedelta(days=day_offset),
        node_ids=tuple(range(len(rows))),
        features=rows,
        edges=tuple(edges),
        labels=tuple(labels),
    )


def random_snapshots(n_days, n_nodes, seed, edge_prob=0.5):
    rng = np.random.default_rng(seed)
    labels = tuple(i % 2 for i in range(n_nodes))
    snaps = []
    for t in range(n_days):
        edges = []
        for i in range(n_nodes):
            for j in range(i + 1, n_nodes):
                if rng.random() < edge_prob:
                    edges.append((i, j, float(rng.uniform(1.0, 30.0))))
        snaps.append(make_snapshot(
            t, rng.normal(size=(n_nodes, 5)).tolist(), labels, edges))
    return snaps


def fast_config(**overrides):
    base = dict(hidden_dim=3, heads=1, cheb_order=1, dropout_p=0.0,
                learning_rate=0.01, patience=3, max_epochs=6, n_splits=2)
    base.update(overrides)
    return TrainConfig(**base)


class TestAdam:
    def test_zero_gradient_leaves_parameters_unchanged(self):
        p = leaf([[1.0, -2.0]])
        p.grad = np.zeros_like(p.data)
        state = OptimizerState.for_parameters([p])
        adam_step([("p", p)], state, lr=0.1)
        assert np.array_equal(p.data, [[1.0, -2.0]])
        assert state.step == 1

    def test_missing_gradient_treated_as_zero(self):
        p = leaf([[3.0]])
        state = OptimizerState.for_parameters([p])
        adam_step([("p", p)], state, lr=0.5)
        assert np.array_equal(p.data, [[3.0]])

    def test_first_step_magnitude(self):
        # Bias correction makes m_hat = g and v_hat = g*g on step one, so
        # the move is exactly lr * g / (|g| + eps) regardless of |g|.
        for g in (1.0, 1e-3, 250.0):
            p = leaf([[0.0]])
            p.grad = np.array([[g]])
            state = OptimizerState.for_parameters([p])
            adam_step([("p", p)], state, lr=0.1)
            want = -0.1 * g / (abs(g) + ADAM_EPS)
            assert p.data[0, 0] == pytest.approx(want, rel=1e-12)

    def test_constant_gradient_step_approaches_lr(self):
        p = leaf([[0.0]])
        state = OptimizerState.for_parameters([p])
        for _ in range(300):
            before = p.data.copy()
            p.grad = np.array([[2.5]])
            adam_step([("p", p)], state, lr=0.01)
        assert (before - p.data)[0, 0] == pytest.approx(0.01, rel=1e-6)

    def test_nonfinite_gradient_names_parameter(self):
        p = leaf([[1.0]], name="dense.weight")
        p.grad = np.array([[np.nan]])
        state = OptimizerState.for_parameters([p])
        with pytest.raises(NumericError, match="dense.weight"):
            adam_step([("dense.weight", p)], state, lr=0.1)

    def test_descends_a_quadratic(self):
        p = leaf([[4.0]])
        state = OptimizerState.for_parameters([p])
        for _ in range(500):
            p.grad = 2.0 * p.data  # d/dp of p^2
            adam_step([("p", p)], state, lr=0.05)
        assert abs(p.data[0, 0]) < 0.05


class TestTrainFold:
    def test_range_validation(self):
        snaps = random_snapshots(6, 3, seed=0)
        cfg = fast_config()
        with pytest.raises(ValidationError):
            train_fold(snaps, range(0, 0), range(3, 6), cfg)
        with pytest.raises(ValidationError):
            train_fold(snaps, range(0, 4), range(3, 6), cfg)

    def test_history_and_early_stop_bookkeeping(self):
        snaps = random_snapshots(8, 4, seed=1)
        cfg = fast_config(max_epochs=12)
        result = train_fold(snaps, range(0, 5), range(5, 8), cfg)
        epochs = [r.epoch for r in result.history]
        assert epochs == list(range(1, len(epochs) + 1))
        assert result.best_val_loss == min(r.val_loss for r in result.history)
        assert result.best_epoch == next(
            r.epoch for r in result.history if r.val_loss == result.best_val_loss
        )
        if len(epochs) < cfg.max_epochs:  # stopped early: exact patience gap
            assert epochs[-1] == result.best_epoch + cfg.patience

    def test_monotone_overfit_stops_after_patience_epochs(self):
        # Train days say node 0 is positive and node 1 negative; validation
        # days say the opposite. Every step that helps the train loss hurts
        # the validation loss, so the best epoch is the first one and the
        # run must stop at exactly 1 + patience epochs.
        train_days = [make_snapshot(t, [[1.0], [-1.0]], (0, 1)) for t in range(8)]
        val_days = [make_snapshot(8 + t, [[-1.0], [1.0]], (0, 1)) for t in range(4)]
        cfg = fast_config(hidden_dim=4, learning_rate=0.05, patience=3,
                          max_epochs=40, use_temporal=False)
        result = train_fold(train_days + val_days, range(0, 8), range(8, 12), cfg)
        val_curve = [r.val_loss for r in result.history]
        assert all(a < b for a, b in zip(val_curve, val_curve[1:]))
        assert result.best_epoch == 1
        assert len(result.history) == 1 + cfg.patience
        train_curve = [r.train_loss for r in result.history]
        assert train_curve[-1] < train_curve[0]

    def test_returned_parameters_reproduce_best_val_loss(self):
        snaps = random_snapshots(9, 3, seed=2)
        cfg = fast_config(max_epochs=8, use_temporal=True)
        train_range, val_range = range(0, 6), range(6, 9)
        result = train_fold(snaps, train_range, val_range, cfg)

        scaled = [apply_normalization(s, result.normalization) for s in snaps]
        eval_snaps = [scaled[i] for i in list(train_range) + list(val_range)]
        n_nodes = 3
        logits = model_forward(eval_snaps, result.parameters, cfg)
        val_logits = slice_rows(logits, len(train_range) * n_nodes, logits.shape[0])
        val_labels = np.concatenate(
            [np.asarray(snaps[i].labels) for i in val_range])
        loss = weighted_cross_entropy(val_logits, val_labels,
                                      np.asarray(result.class_weights))
        assert float(loss.data) == result.best_val_loss

    def test_same_seed_is_bit_reproducible(self):
        snaps = random_snapshots(8, 3, seed=3)
        cfg = fast_config(max_epochs=4, dropout_p=0.3)
        a = train_fold(snaps, range(0, 5), range(5, 8), cfg)
        b = train_fold(snaps, range(0, 5), range(5, 8), cfg)
        assert a.history == b.history
        for (name_a, pa), (_, pb) in zip(a.parameters.named(), b.parameters.named()):
            assert np.array_equal(pa.data, pb.data), name_a

    def test_fold_index_changes_initialization(self):
        snaps = random_snapshots(8, 3, seed=4)
        cfg = fast_config(max_epochs=2)
        a = train_fold(snaps, range(0, 5), range(5, 8), cfg, fold_index=1)
        b = train_fold(snaps, range(0, 5), range(5, 8), cfg, fold_index=2)
        assert not np.array_equal(a.parameters.dense_weight.data,
                                  b.parameters.dense_weight.data)

    def test_skipping_normalization_is_recorded(self):
        snaps = random_snapshots(6, 3, seed=5)
        cfg = fast_config(normalize_features=False, max_epochs=2)
        result = train_fold(snaps, range(0, 4), range(4, 6), cfg)
        assert result.normalization is None

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reports_epoch(self):
        # Saturating gates keep ordinary runs finite no matter the learning
        # rate, so drive the first attention matmul past float64 range with
        # raw near-max features and normalization off.
        big = 1e308
        rows = [[big, -big, big, -big, big],
                [-big, big, -big, big, -big],
                [big, big, -big, -big, big]]
        snaps = [make_snapshot(t, rows, (0, 1, 0)) for t in range(6)]
        cfg = fast_config(normalize_features=False)
        with pytest.raises(NumericError, match=r"training diverged at epoch \d+"):
            train_fold(snaps, range(0, 4), range(4, 6), cfg)


class TestTrainCv:
    def test_expanding_window_fold_count_and_indices(self):
        snaps = random_snapshots(9, 3, seed=7)
        cfg = fast_config(n_splits=2, max_epochs=2)
        results = train(TemporalDataset(tuple(snaps)), cfg)
        assert [r.fold for r in results] == [1, 2]

    def test_folds_differ(self):
        snaps = random_snapshots(9, 3, seed=8)
        cfg = fast_config(n_splits=2, max_epochs=2)
        a, b = train(TemporalDataset(tuple(snaps)), cfg)
        assert a.best_val_loss != b.best_val_loss


class TestCheckpoint:
    def _trained(self):
        snaps = random_snapshots(8, 3, seed=9)
        cfg = fast_config(max_epochs=3)
        return snaps, cfg, train_fold(snaps, range(0, 5), range(5, 8), cfg)

    def test_round_trip_bit_reproduces_predictions(self):
        snaps, cfg, result = self._trained()
        text = checkpoint_to_json(result, cfg)
        loaded_cfg, loaded = checkpoint_from_json(text)
        assert loaded_cfg == cfg
        assert loaded.best_epoch == result.best_epoch
        assert loaded.best_val_loss == result.best_val_loss
        assert loaded.history == result.history
        assert loaded.normalization == result.normalization
        for (name, pa), (_, pb) in zip(result.parameters.named(),
                                       loaded.parameters.named()):
            assert np.array_equal(pa.data, pb.data), name
        scaled = [apply_normalization(s, result.normalization) for s in snaps]
        c_orig, p_orig = predict(scaled, result.parameters, cfg)
        c_load, p_load = predict(scaled, loaded.parameters, loaded_cfg)
        assert np.array_equal(c_orig, c_load)
        assert np.array_equal(p_orig, p_load)

    def test_malformed_json_rejected(self):
        with pytest.raises(ValidationError, match="malformed checkpoint"):
            checkpoint_from_json("{not json")

    def test_missing_parameter_rejected(self):
        _, cfg, result = self._trained()
        import json

        payload = json.loads(checkpoint_to_json(result, cfg))
        del payload["parameters"]["dense.bias"]
        with pytest.raises(ValidationError):
            checkpoint_from_json(json.dumps(payload))

    def test_wrong_shape_rejected(self):
        _, cfg, result = self._trained()
        import json

        payload = json.loads(checkpoint_to_json(result, cfg))
        payload["parameters"]["dense.bias"] = [[0.0, 0.0, 0.0]]
        with pytest.raises(ValidationError, match="shape"):
            checkpoint_from_json(json.dumps(payload))

    def test_wrong_declared_count_rejected(self):
        _, cfg, result = self._trained()
        import json

        payload = json.loads(checkpoint_to_json(result, cfg))
        payload["parameter_count"] += 1
        with pytest.raises(ValidationError, match="declares"):
            checkpoint_from_json(json.dumps(payload))


class TestDataclasses:
    def test_epoch_record_is_frozen(self):
        rec = EpochRecord(1, 0.5, 0.6)
        with pytest.raises(AttributeError):
            rec.epoch = 2

    def test_fold_result_fields(self):
        snaps = random_snapshots(6, 3, seed=10)
        cfg = fast_config(max_epochs=2)
        result = train_fold(snaps, range(0, 4), range(4, 6), cfg, fold_index=5)
        assert isinstance(result, FoldResult)
        assert result.fold == 5
        assert len(result.class_weights) == 2
