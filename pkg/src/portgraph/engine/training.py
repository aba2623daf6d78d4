"""Adam optimization, early stopping, cross-validated training, checkpoints.

Each epoch is one full-batch pass: forward over the training snapshots in
time order, one optimizer step, then a no-dropout evaluation pass whose
validation loss drives early stopping. Training stops once the best
validation loss has not improved (strictly) for `patience` epochs and
returns the parameters saved at the best epoch.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from ..errors import NumericError, ValidationError
from ..graphs import GraphSnapshot, Normalization, TemporalDataset, normalize, time_series_splits
from .autodiff import Tensor
from .model import (
    ModelParameters,
    TrainConfig,
    compute_class_weights,
    init_parameters,
    model_forward,
    weighted_cross_entropy,
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class OptimizerState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def for_parameters(cls, params: Sequence[Tensor]) -> "OptimizerState":
        return cls(
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
        )


def adam_step(
    named_params: Sequence[tuple[str, Tensor]],
    state: OptimizerState,
    lr: float,
) -> None:
    """Bias-corrected Adam update, in place; gradients must be populated."""
    state.step += 1
    t = state.step
    for i, (name, p) in enumerate(named_params):
        grad = p.grad
        if grad is None:
            grad = np.zeros_like(p.data)
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient for parameter {name}")
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * grad
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * grad * grad
        m_hat = state.m[i] / (1.0 - ADAM_BETA1 ** t)
        v_hat = state.v[i] / (1.0 - ADAM_BETA2 ** t)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


@dataclass(frozen=True, slots=True)
class EpochRecord:
    epoch: int  # 1-based
    train_loss: float
    val_loss: float


@dataclass(frozen=True, slots=True)
class FoldResult:
    fold: int  # 1-based fold index
    parameters: ModelParameters
    best_epoch: int
    best_val_loss: float
    history: tuple[EpochRecord, ...]
    normalization: Normalization | None
    class_weights: tuple[float, float]


def _labels_for(snapshots: Sequence[GraphSnapshot]) -> np.ndarray:
    return np.concatenate([np.asarray(s.labels) for s in snapshots])


def _snapshot_params(params: ModelParameters) -> dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in params.named()}


def _restore_params(params: ModelParameters, stored: dict[str, np.ndarray]) -> None:
    for name, p in params.named():
        p.data = stored[name].copy()


def train_fold(
    snapshots: Sequence[GraphSnapshot],
    train_range: range,
    val_range: range,
    config: TrainConfig,
    fold_index: int = 1,
) -> FoldResult:
    """Train on one expanding-window fold; see the module docstring."""
    if len(train_range) == 0 or len(val_range) == 0:
        raise ValidationError("train and validation ranges must be non-empty")
    if max(train_range) >= min(val_range):
        raise ValidationError("every train index must precede every validation index")

    norm = None
    working = tuple(snapshots)
    if config.normalize_features:
        ds = normalize(TemporalDataset(tuple(snapshots)), train_range.stop)
        working = ds.snapshots
        norm = ds.normalization

    train_snaps = [working[i] for i in train_range]
    # Recurrent state for validation days depends on the whole prefix, so
    # evaluation runs over train+val in order and scores the val rows.
    eval_snaps = [working[i] for i in list(train_range) + list(val_range)]
    n_nodes = len(working[0].node_ids)
    val_row_start = len(train_range) * n_nodes

    train_labels = _labels_for(train_snaps)
    val_labels = _labels_for([working[i] for i in val_range])
    weights = compute_class_weights(train_labels)

    seed = config.seed + fold_index
    init_rng = np.random.default_rng(seed)
    dropout_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    params = init_parameters(config, init_rng)
    named = list(params.named())
    state = OptimizerState.for_parameters([p for _, p in named])

    from .autodiff import slice_rows  # local import to keep module tops tidy

    best_epoch = 0
    best_val = np.inf
    best_store: dict[str, np.ndarray] = _snapshot_params(params)
    history: list[EpochRecord] = []

    for epoch in range(1, config.max_epochs + 1):
        try:
            logits = model_forward(train_snaps, params, config, train_mode=True,
                                   dropout_rng=dropout_rng)
            loss = weighted_cross_entropy(logits, train_labels, weights)
            for _, p in named:
                p.zero_grad()
            loss.backward()
            adam_step(named, state, config.learning_rate)

            eval_logits = model_forward(eval_snaps, params, config, train_mode=False)
            val_logits = slice_rows(eval_logits, val_row_start, eval_logits.shape[0])
            val_loss = weighted_cross_entropy(val_logits, val_labels, weights)
        except NumericError as exc:
            raise NumericError(f"training diverged at epoch {epoch}: {exc}") from None

        train_loss = float(loss.data)
        val_loss_f = float(val_loss.data)
        history.append(EpochRecord(epoch, train_loss, val_loss_f))
        if val_loss_f < best_val:
            best_val = val_loss_f
            best_epoch = epoch
            best_store = _snapshot_params(params)
        if epoch - best_epoch >= config.patience:
            break

    _restore_params(params, best_store)
    return FoldResult(
        fold=fold_index,
        parameters=params,
        best_epoch=best_epoch,
        best_val_loss=float(best_val),
        history=tuple(history),
        normalization=norm,
        class_weights=(float(weights[0]), float(weights[1])),
    )


def train(dataset: TemporalDataset, config: TrainConfig) -> list[FoldResult]:
    """Cross-validated training over expanding-window folds."""
    splits = time_series_splits(len(dataset.snapshots), config.n_splits)
    results = []
    for fold_index, (train_range, val_range) in enumerate(splits, start=1):
        results.append(
            train_fold(dataset.snapshots, train_range, val_range, config, fold_index)
        )
    return results


# --- Checkpoint file ---------------------------------------------------------
#
# JSON object: {config, normalization, parameters, parameter_count,
# best_epoch, history, fold}. Loading rebuilds the exact float64 tensors, so
# predictions reproduce bit for bit.


def checkpoint_to_json(result: FoldResult, config: TrainConfig) -> str:
    payload = {
        "config": asdict(config),
        "normalization": (
            {"means": list(result.normalization.means),
             "stds": list(result.normalization.stds)}
            if result.normalization is not None
            else None
        ),
        "parameters": {
            name: p.data.tolist() for name, p in result.parameters.named()
        },
        "parameter_count": result.parameters.parameter_count(),
        "best_epoch": result.best_epoch,
        "best_val_loss": result.best_val_loss,
        "class_weights": list(result.class_weights),
        "history": [[r.epoch, r.train_loss, r.val_loss] for r in result.history],
        "fold": result.fold,
    }
    return json.dumps(payload, indent=2) + "\n"


def checkpoint_from_json(text: str | bytes) -> tuple[TrainConfig, FoldResult]:
    try:
        payload = json.loads(text)
        config = TrainConfig(**payload["config"])
        rng = np.random.default_rng(0)  # shapes only; data overwritten below
        params = init_parameters(config, rng)
        stored = payload["parameters"]
        for name, p in params.named():
            arr = np.asarray(stored[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValidationError(
                    f"checkpoint parameter {name} has shape {arr.shape}, "
                    f"expected {p.data.shape}"
                )
            p.data = arr
        norm = None
        if payload["normalization"] is not None:
            norm = Normalization(
                means=tuple(float(v) for v in payload["normalization"]["means"]),
                stds=tuple(float(v) for v in payload["normalization"]["stds"]),
            )
        declared = int(payload["parameter_count"])
        actual = params.parameter_count()
        if declared != actual:
            raise ValidationError(
                f"checkpoint declares {declared} parameters, tensors hold {actual}"
            )
        result = FoldResult(
            fold=int(payload.get("fold") or 0),
            parameters=params,
            best_epoch=int(payload["best_epoch"]),
            best_val_loss=float(payload["best_val_loss"]),
            history=tuple(
                EpochRecord(int(e), float(tr), float(va))
                for e, tr, va in payload["history"]
            ),
            normalization=norm,
            class_weights=tuple(float(w) for w in payload["class_weights"]),
        )
        return config, result
    except ValidationError:
        raise
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise ValidationError(f"malformed checkpoint: {exc}") from None
