"""Session-scoped fixtures for the expensive end-to-end products.

The stock scenario pipeline and the cross-validation outcomes are shared by
the headline checks in test_acceptance.py, so each is computed exactly once
per session no matter how many tests consume it.
"""

import time
from dataclasses import replace
from datetime import date, timedelta

import numpy as np
import pytest

from portgraph.core import parse_ais_csv
from portgraph.engine.model import TrainConfig
from portgraph.graphs import GraphSnapshot, TemporalDataset, build_snapshots
from portgraph.metrics import dropout_sweep, run_cv
from portgraph.ports import extract_ports, transfer_labels
from portgraph.segmentation import annotate, extract_visits, extract_voyages
from portgraph.synthetic import ScenarioConfig, generate

# Cross-validation settings for the headline runs. The library default
# learning rate (1e-4) converges far too slowly for a test budget; 3e-3
# reaches the same scores in a couple hundred epochs.
HEADLINE_TRAIN = TrainConfig(learning_rate=3e-3, max_epochs=150, patience=10)

# The dropout sweep needs a dataset an unregularized fit can get wrong.
# Fleet scenarios will not do here: dwell behavior separates the classes so
# cleanly that the sweep scores weighted f = 1.0 at every dropout level.
# This constructed dataset plants a trap instead: feature 1 tracks the
# labels perfectly over the first fold's training days and flips sign for
# every later day, while feature 0 carries a weak but durable signal. A fit
# that rides the spurious feature tanks its validation window; dropout
# pushes weight onto the robust one.
SWEEP_LABELS = (0, 1, 0, 1, 0, 1, 0, 1)
SWEEP_EDGES = ((0, 2, 4.0), (1, 3, 7.0), (4, 6, 5.0), (5, 7, 6.0))
SWEEP_TRAIN = TrainConfig(
    learning_rate=0.05, patience=8, heads=1, hidden_dim=6,
    cheb_order=1, max_epochs=120, n_splits=2, seed=2,
)


def sweep_dataset() -> TemporalDataset:
    rng = np.random.default_rng(1)
    days, flip = 24, 8  # days [0, 8) train fold 1; the trap flips at day 8
    snaps = []
    for t in range(days):
        sign = 1.0 if t < flip else -1.0
        rows = []
        for lab in SWEEP_LABELS:
            pm = 1.0 if lab == 1 else -1.0
            robust = pm + rng.normal(0.0, 0.8)
            spurious = sign * 4.0 * pm + rng.normal(0.0, 0.1)
            rows.append((robust, spurious, *rng.normal(size=3)))
        snaps.append(GraphSnapshot(
            day=date(2024, 5, 1) + timedelta(days=t),
            node_ids=tuple(range(len(SWEEP_LABELS))),
            features=tuple(tuple(float(v) for v in row) for row in rows),
            edges=SWEEP_EDGES,
            labels=SWEEP_LABELS,
        ))
    return TemporalDataset(tuple(snaps))


def run_pipeline(scenario: ScenarioConfig):
    """Scenario -> messages -> ports -> labeled registry -> daily snapshots."""
    csv_text, truth = generate(scenario)
    messages = parse_ais_csv(csv_text)
    del csv_text
    extracted = extract_ports(messages)
    registry = transfer_labels(extracted, truth)
    labeled = annotate(messages, registry)
    del messages
    visits = extract_visits(labeled)
    voyages = extract_voyages(visits, labeled)
    snapshots = build_snapshots(voyages, labeled, registry)
    return {
        "truth": truth,
        "extracted": extracted,
        "registry": registry,
        "n_visits": len(visits),
        "n_voyages": len(voyages),
        "dataset": TemporalDataset(tuple(snapshots)),
    }


@pytest.fixture(scope="session")
def stock_products():
    """Every pipeline artifact for the default 15-port, 120-day scenario."""
    return run_pipeline(ScenarioConfig())


@pytest.fixture(scope="session")
def cv_full(stock_products):
    """Attention+temporal cross-validation on the stock scenario, timed."""
    t0 = time.perf_counter()
    outcome = run_cv(stock_products["dataset"], HEADLINE_TRAIN)
    return outcome, time.perf_counter() - t0


@pytest.fixture(scope="session")
def cv_attention_only(stock_products):
    config = replace(HEADLINE_TRAIN, use_temporal=False)
    return run_cv(stock_products["dataset"], config)


@pytest.fixture(scope="session")
def cv_temporal_only(stock_products):
    config = replace(HEADLINE_TRAIN, use_attention=False)
    return run_cv(stock_products["dataset"], config)


@pytest.fixture(scope="session")
def sweep_outcomes():
    return dropout_sweep(sweep_dataset(), SWEEP_TRAIN)
