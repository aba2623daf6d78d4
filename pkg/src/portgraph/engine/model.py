"""The full temporal model: attention stack, graph recurrence, dense head.

Per snapshot, in time order: two attention graph convolutions, one
Chebyshev-GRU step (state carried across snapshots when the temporal flag is
on, reset to zeros otherwise), inverted dropout in training mode, and a
dense layer producing one logit pair per port. For speed the two attention
layers run once over all snapshots batched as a single block-diagonal graph;
only the recurrence walks days one at a time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from ..errors import NumericError, ValidationError
from ..graphs import GraphSnapshot
from .autodiff import Tensor, concat_rows, exp, log, slice_rows
from .layers import (
    GatParams,
    GruParams,
    expand_edges,
    gat_forward,
    gconv_gru_step,
    init_gat,
    init_gru,
    glorot_uniform,
    merge_edges,
    scaled_laplacian,
    zeros_param,
)

N_CLASSES = 2
N_FEATURES = 5


@dataclass(frozen=True, slots=True)
class TrainConfig:
    learning_rate: float = 1e-4
    dropout_p: float = 0.2
    patience: int = 10
    heads: int = 2
    edge_dim: int = 1
    hidden_dim: int = 64
    cheb_order: int = 2
    max_epochs: int = 1000
    seed: int = 7
    use_attention: bool = True
    use_temporal: bool = True
    n_splits: int = 8
    normalize_features: bool = True

    def __post_init__(self):
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValidationError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.patience < 1:
            raise ValidationError(f"patience must be >= 1, got {self.patience}")
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.heads < 1 or self.hidden_dim < 1 or self.cheb_order < 1:
            raise ValidationError("heads, hidden_dim and cheb_order must be >= 1")
        if self.edge_dim != 1:
            raise ValidationError(f"edge_dim is fixed at 1, got {self.edge_dim}")
        if self.max_epochs < 1:
            raise ValidationError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.n_splits < 1:
            raise ValidationError(f"n_splits must be >= 1, got {self.n_splits}")


@dataclass(frozen=True, slots=True)
class ModelParameters:
    gat1: GatParams
    gat2: GatParams
    gru: GruParams
    dense_weight: Tensor
    dense_bias: Tensor

    def named(self) -> Iterator[tuple[str, Tensor]]:
        for tag, gat in (("gat1", self.gat1), ("gat2", self.gat2)):
            for h, head in enumerate(gat.heads):
                yield f"{tag}.head{h}.weight", head.weight
                yield f"{tag}.head{h}.att_dst", head.att_dst
                yield f"{tag}.head{h}.att_src", head.att_src
                yield f"{tag}.head{h}.att_edge", head.att_edge
        for gate_name in ("update", "reset", "candidate"):
            gate = getattr(self.gru, gate_name)
            for i, th in enumerate(gate.theta_x):
                yield f"gru.{gate_name}.theta_x{i}", th
            for i, th in enumerate(gate.theta_h):
                yield f"gru.{gate_name}.theta_h{i}", th
            yield f"gru.{gate_name}.bias", gate.bias
        yield "dense.weight", self.dense_weight
        yield "dense.bias", self.dense_bias

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named()]

    def parameter_count(self) -> int:
        return sum(t.data.size for t in self.tensors())


def init_parameters(config: TrainConfig, rng: np.random.Generator) -> ModelParameters:
    """Glorot-uniform weights, zero biases; draw order is fixed and documented:
    gat1 heads, gat2 heads, gru gates (update, reset, candidate), dense."""
    hidden = config.hidden_dim
    gat1 = init_gat(rng, N_FEATURES, hidden, config.heads, "gat1")
    gat2 = init_gat(rng, hidden, hidden, config.heads, "gat2")
    gru = init_gru(rng, hidden, hidden, config.cheb_order, "gru")
    dense_w = glorot_uniform(rng, hidden, N_CLASSES, (hidden, N_CLASSES), "dense.weight")
    dense_b = zeros_param((1, N_CLASSES), "dense.bias")
    return ModelParameters(gat1=gat1, gat2=gat2, gru=gru,
                           dense_weight=dense_w, dense_bias=dense_b)


def model_forward(
    snapshots: Sequence[GraphSnapshot],
    params: ModelParameters,
    config: TrainConfig,
    train_mode: bool = False,
    dropout_rng: np.random.Generator | None = None,
) -> Tensor:
    """Logits for every (snapshot, node) pair, concatenated in time order.

    Output shape is (sum of node counts, 2); rows follow snapshot order, and
    node order within each snapshot. Dropout needs dropout_rng in train mode.
    """
    if not snapshots:
        raise ValidationError("model_forward needs at least one snapshot")
    n_nodes = len(snapshots[0].node_ids)
    features = Tensor(np.concatenate([s.feature_array() for s in snapshots], axis=0))
    block_edges = merge_edges(
        [expand_edges(s.edges, n_nodes, offset=t * n_nodes)
         for t, s in enumerate(snapshots)]
    )

    try:
        h = gat_forward(features, block_edges, params.gat1, config.use_attention)
        h = gat_forward(h, block_edges, params.gat2, config.use_attention)
    except NumericError as exc:
        raise NumericError(f"attention stack failed: {exc}") from None

    per_day_edges = [expand_edges(s.edges, n_nodes) for s in snapshots]
    laplacians = [scaled_laplacian(e) for e in per_day_edges]

    hidden_parts = []
    state = Tensor(np.zeros((n_nodes, config.hidden_dim)))
    for t in range(len(snapshots)):
        x_t = slice_rows(h, t * n_nodes, (t + 1) * n_nodes)
        if not config.use_temporal:
            state = Tensor(np.zeros((n_nodes, config.hidden_dim)))
        try:
            state = gconv_gru_step(x_t, state, laplacians[t], params.gru)
        except NumericError as exc:
            raise NumericError(f"graph recurrence failed at snapshot {t}: {exc}") from None
        hidden_parts.append(state)

    stacked = concat_rows(hidden_parts)
    if train_mode and config.dropout_p > 0.0:
        if dropout_rng is None:
            raise ValidationError("train-mode dropout needs a random generator")
        keep = 1.0 - config.dropout_p
        mask = (dropout_rng.random(stacked.shape) < keep) / keep  # inverted dropout
        stacked = stacked * Tensor(mask)
    return stacked @ params.dense_weight + params.dense_bias


def compute_class_weights(labels: np.ndarray) -> np.ndarray:
    """w_c = N_total / (2 * N_c) over the training labels."""
    labels = np.asarray(labels)
    counts = np.bincount(labels, minlength=N_CLASSES)
    if (counts == 0).any():
        missing = int(np.flatnonzero(counts == 0)[0])
        raise ValidationError(
            f"class {missing} absent from training labels; "
            "pass explicit class weights to override"
        )
    return len(labels) / (N_CLASSES * counts.astype(np.float64))


def weighted_cross_entropy(
    logits: Tensor, labels: np.ndarray, class_weights: np.ndarray
) -> Tensor:
    """Weighted mean of per-row cross-entropy: sum(w_y * nll) / sum(w_y)."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.shape[0] != len(labels):
        raise ValidationError(
            f"{logits.shape[0]} logit rows vs {len(labels)} labels"
        )
    shift = logits.data.max(axis=1, keepdims=True)  # constant, for stability
    z = logits - shift
    log_norm = log(exp(z).sum(axis=1, keepdims=True))
    one_hot = np.zeros((len(labels), N_CLASSES))
    one_hot[np.arange(len(labels)), labels] = 1.0
    picked = (z * one_hot).sum(axis=1, keepdims=True)
    w = class_weights[labels].reshape(-1, 1)
    total = (Tensor(w) * (log_norm - picked)).sum()
    return total / float(w.sum())


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def predict(
    snapshots: Sequence[GraphSnapshot],
    params: ModelParameters,
    config: TrainConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Class index and probability per (snapshot, node) row, eval mode.

    Ties go to the lower class index (argmax's first-hit rule).
    """
    logits = model_forward(snapshots, params, config, train_mode=False)
    probs = softmax_rows(logits.data)
    classes = probs.argmax(axis=1)
    return classes, probs
