"""Classify maritime ports as operational harbors or offshore waiting areas.

The pipeline: raw AIS messages -> stationary-point clustering into port
polygons -> per-message port annotation -> visits and voyages -> daily graph
snapshots -> temporal graph neural network -> per-port labels.
"""

from .core import (
    AisMessage,
    Port,
    PortLabel,
    Visit,
    Voyage,
    haversine_km,
    parse_ais_csv,
    write_ais_csv,
)
from .engine.model import TrainConfig, init_parameters, model_forward, predict
from .engine.training import (
    FoldResult,
    checkpoint_from_json,
    checkpoint_to_json,
    train,
    train_fold,
)
from .errors import (
    CsvParseError,
    DegenerateGeometryError,
    NumericError,
    PortgraphError,
    ValidationError,
)
from .graphs import (
    GraphSnapshot,
    TemporalDataset,
    build_snapshots,
    snapshots_from_ndjson,
    snapshots_to_ndjson,
    time_series_splits,
)
from .metrics import (
    ablation_report,
    confusion,
    dropout_sweep,
    run_cv,
    weighted_prf,
)
from .ports import (
    DbscanParams,
    dbscan,
    extract_ports,
    registry_from_json,
    registry_to_json,
    transfer_labels,
)
from .segmentation import annotate, extract_visits, extract_voyages
from .synthetic import ScenarioConfig, generate

__version__ = "0.1.0"

__all__ = [
    "AisMessage",
    "CsvParseError",
    "DbscanParams",
    "DegenerateGeometryError",
    "FoldResult",
    "GraphSnapshot",
    "NumericError",
    "Port",
    "PortLabel",
    "PortgraphError",
    "ScenarioConfig",
    "TemporalDataset",
    "TrainConfig",
    "ValidationError",
    "Visit",
    "Voyage",
    "__version__",
    "ablation_report",
    "annotate",
    "build_snapshots",
    "checkpoint_from_json",
    "checkpoint_to_json",
    "confusion",
    "dbscan",
    "dropout_sweep",
    "extract_ports",
    "extract_visits",
    "extract_voyages",
    "generate",
    "haversine_km",
    "init_parameters",
    "model_forward",
    "parse_ais_csv",
    "predict",
    "registry_from_json",
    "registry_to_json",
    "run_cv",
    "snapshots_from_ndjson",
    "snapshots_to_ndjson",
    "time_series_splits",
    "train",
    "train_fold",
    "transfer_labels",
    "weighted_prf",
    "write_ais_csv",
]
