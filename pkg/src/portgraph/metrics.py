"""Scoring and report tables: confusion matrices, weighted PRF, ablations.

Scores are computed at the (snapshot, node) level: every port contributes
one prediction per validation day. Cross-validated numbers are reported as
mean plus/minus population standard deviation across folds, and the pooled
confusion matrix accumulates counts over every fold's validation rows.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .engine.model import TrainConfig, predict
from .engine.training import FoldResult, train
from .errors import ValidationError
from .graphs import TemporalDataset, apply_normalization, time_series_splits

DROPOUT_GRID = (0.0, 0.1, 0.2, 0.3)


@dataclass(frozen=True, slots=True)
class ConfusionMatrix:
    counts: tuple[tuple[int, int], tuple[int, int]]  # rows true, columns predicted
    normalized: tuple[tuple[float, float], tuple[float, float]]

    def diagonal_mean(self) -> float:
        return (self.normalized[0][0] + self.normalized[1][1]) / 2.0


@dataclass(frozen=True, slots=True)
class ScoreReport:
    precision_mu: float
    precision_sd: float
    recall_mu: float
    recall_sd: float
    f_mu: float
    f_sd: float


@dataclass(frozen=True, slots=True)
class CvOutcome:
    """One cross-validated evaluation: a setting name, fold scores, reports."""

    setting: str
    report: ScoreReport
    confusion: ConfusionMatrix
    fold_scores: tuple[tuple[float, float, float], ...]
    fold_results: tuple[FoldResult, ...]


def _check_labels(y_true, y_pred) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(y_pred, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1:
        raise ValidationError(
            f"label vectors must be 1-d and equal length, got {t.shape} vs {p.shape}"
        )
    if t.size == 0:
        raise ValidationError("cannot score an empty label vector")
    for name, v in (("true", t), ("predicted", p)):
        if not np.isin(v, (0, 1)).all():
            raise ValidationError(f"{name} labels must all be 0 or 1")
    return t, p


def confusion(y_true, y_pred) -> ConfusionMatrix:
    """Counts[i][j] = how often true class i was predicted as j; rows are
    normalized by their sums, with an all-zero row for absent classes."""
    t, p = _check_labels(y_true, y_pred)
    counts = np.zeros((2, 2), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    norm = np.zeros((2, 2))
    for i in range(2):
        row_sum = counts[i].sum()
        if row_sum > 0:
            norm[i] = counts[i] / row_sum
    return ConfusionMatrix(
        counts=tuple(tuple(int(v) for v in row) for row in counts),
        normalized=tuple(tuple(float(v) for v in row) for row in norm),
    )


def weighted_prf(y_true, y_pred) -> tuple[float, float, float]:
    """Support-weighted precision, recall and F1 with zero-division -> 0."""
    t, p = _check_labels(y_true, y_pred)
    precision = recall = fscore = 0.0
    for cls in (0, 1):
        support = int((t == cls).sum())
        if support == 0:
            continue
        tp = int(((t == cls) & (p == cls)).sum())
        predicted = int((p == cls).sum())
        prec = tp / predicted if predicted > 0 else 0.0
        rec = tp / support
        f = 2.0 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        w = support / t.size
        precision += w * prec
        recall += w * rec
        fscore += w * f
    return precision, recall, fscore


def score_report(fold_scores: Sequence[tuple[float, float, float]]) -> ScoreReport:
    """Mean and population standard deviation of per-fold (P, R, F) triples."""
    if not fold_scores:
        raise ValidationError("score report needs at least one fold")
    arr = np.asarray(fold_scores, dtype=np.float64)
    mu = arr.mean(axis=0)
    sd = arr.std(axis=0)
    return ScoreReport(
        precision_mu=float(mu[0]), precision_sd=float(sd[0]),
        recall_mu=float(mu[1]), recall_sd=float(sd[1]),
        f_mu=float(mu[2]), f_sd=float(sd[2]),
    )


def setting_name(config: TrainConfig) -> str:
    if config.use_attention and config.use_temporal:
        return "attention-temporal"
    if config.use_attention:
        return "attention-only"
    if config.use_temporal:
        return "temporal-only"
    return "plain"


def run_cv(dataset: TemporalDataset, config: TrainConfig,
           setting: str | None = None) -> CvOutcome:
    """Train every expanding-window fold and score its validation rows."""
    results = train(dataset, config)
    splits = time_series_splits(len(dataset.snapshots), config.n_splits)
    n_nodes = len(dataset.snapshots[0].node_ids)

    fold_scores = []
    pooled_true: list[np.ndarray] = []
    pooled_pred: list[np.ndarray] = []
    for result, (train_range, val_range) in zip(results, splits):
        if result.normalization is not None:
            scaled = [apply_normalization(s, result.normalization)
                      for s in dataset.snapshots]
        else:
            scaled = list(dataset.snapshots)
        eval_snaps = [scaled[i] for i in list(train_range) + list(val_range)]
        classes, _ = predict(eval_snaps, result.parameters, config)
        val_pred = classes[len(train_range) * n_nodes:]
        val_true = np.concatenate(
            [np.asarray(dataset.snapshots[i].labels) for i in val_range])
        fold_scores.append(weighted_prf(val_true, val_pred))
        pooled_true.append(val_true)
        pooled_pred.append(val_pred)

    return CvOutcome(
        setting=setting if setting is not None else setting_name(config),
        report=score_report(fold_scores),
        confusion=confusion(np.concatenate(pooled_true), np.concatenate(pooled_pred)),
        fold_scores=tuple(fold_scores),
        fold_results=tuple(results),
    )


def ablation_settings(base: TrainConfig) -> list[tuple[str, TrainConfig]]:
    return [
        ("attention-only", replace(base, use_attention=True, use_temporal=False)),
        ("temporal-only", replace(base, use_attention=False, use_temporal=True)),
        ("attention-temporal", replace(base, use_attention=True, use_temporal=True)),
    ]


def ablation_report(dataset: TemporalDataset, base_config: TrainConfig) -> list[CvOutcome]:
    """Cross-validate the three architecture settings with identical seeds."""
    return [run_cv(dataset, cfg, setting=name)
            for name, cfg in ablation_settings(base_config)]


def dropout_sweep(dataset: TemporalDataset, base_config: TrainConfig,
                  grid: Sequence[float] = DROPOUT_GRID) -> list[tuple[float, CvOutcome]]:
    out = []
    for p in grid:
        cfg = replace(base_config, dropout_p=p)
        out.append((p, run_cv(dataset, cfg, setting=f"dropout-{p:g}")))
    return out


# --- Report files --------------------------------------------------------------

def _report_row(outcome: CvOutcome) -> str:
    r = outcome.report
    return ",".join(f"{v:.6f}" for v in (
        r.precision_mu, r.precision_sd, r.recall_mu, r.recall_sd, r.f_mu, r.f_sd))


def ablation_csv(outcomes: Sequence[CvOutcome]) -> str:
    lines = ["flags,precision_mu,precision_sd,recall_mu,recall_sd,f_mu,f_sd"]
    lines += [f"{o.setting},{_report_row(o)}" for o in outcomes]
    return "\n".join(lines) + "\n"


def dropout_csv(sweep: Sequence[tuple[float, CvOutcome]]) -> str:
    lines = ["dropout_p,precision_mu,precision_sd,recall_mu,recall_sd,f_mu,f_sd"]
    lines += [f"{p:g},{_report_row(o)}" for p, o in sweep]
    return "\n".join(lines) + "\n"


def confusion_csv(cm: ConfusionMatrix) -> str:
    lines = ["truth,pred_actual,pred_gateway,norm_actual,norm_gateway"]
    for name, row, nrow in zip(("actual", "gateway"), cm.counts, cm.normalized):
        lines.append(f"{name},{row[0]},{row[1]},{nrow[0]:.6f},{nrow[1]:.6f}")
    return "\n".join(lines) + "\n"


def loss_history_csv(fold_results: Sequence[FoldResult]) -> str:
    lines = ["fold,epoch,train_loss,val_loss"]
    for result in fold_results:
        for rec in result.history:
            lines.append(
                f"{result.fold},{rec.epoch},{rec.train_loss:.6f},{rec.val_loss:.6f}")
    return "\n".join(lines) + "\n"


def format_ablation_table(outcomes: Sequence[CvOutcome]) -> str:
    """Aligned text table of mu +/- sd per setting, for terminal output."""
    width = max(len(o.setting) for o in outcomes)
    header = (f"{'setting':<{width}}  {'precision':>15}  "
              f"{'recall':>15}  {'f-score':>15}")
    lines = [header, "-" * len(header)]
    for o in outcomes:
        r = o.report
        cells = [f"{mu:.3f} +/- {sd:.3f}" for mu, sd in (
            (r.precision_mu, r.precision_sd),
            (r.recall_mu, r.recall_sd),
            (r.f_mu, r.f_sd))]
        lines.append(f"{o.setting:<{width}}  {cells[0]:>15}  "
                     f"{cells[1]:>15}  {cells[2]:>15}")
    return "\n".join(lines) + "\n"
