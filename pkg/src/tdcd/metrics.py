"""Simulated latency clock and evaluation metrics."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError
from .models import LossSpec, composite_loss, embedding_sum


@dataclass(frozen=True)
class LatencyModel:
    """Per-round cost model.

    ``t_comm`` is one round-trip hop; ``t_comp`` one local gradient step. When
    ``t_hub`` is set, hub-to-hub exchange is charged separately from the two
    hub-client hops.
    """

    t_comm: float = 0.0
    t_comp: float = 0.0
    t_hub: float | None = None

    def __post_init__(self):
        if self.t_comm < 0 or self.t_comp < 0 or (self.t_hub is not None and self.t_hub < 0):
            raise ConfigError("latency constants must be >= 0")


def round_latency(local_steps: int, model: LatencyModel) -> float:
    if local_steps < 1:
        raise ConfigError("local_steps must be >= 1")
    if model.t_hub is None:
        return 3 * model.t_comm + local_steps * model.t_comp
    return 2 * model.t_comm + model.t_hub + local_steps * model.t_comp


@dataclass
class MetricReport:
    split: str
    loss: float
    n_samples: int
    accuracy: float | None = None
    f1: float | None = None
    top_k_accuracy: float | None = None
    top_k: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def predictions(logits: np.ndarray, loss: LossSpec) -> np.ndarray:
    if loss.kind == "binary_cross_entropy_with_logit":
        return (logits.reshape(-1) >= 0.0).astype(np.int64)
    # argmax returns the first maximum, so ties go to the lowest class index
    return np.argmax(logits, axis=1)


def accuracy(pred: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(pred == np.asarray(labels).astype(np.int64)))


def f1_score(pred: np.ndarray, labels: np.ndarray) -> float:
    """F1 on the positive class; 0 when precision + recall is 0 or undefined."""
    y = np.asarray(labels).astype(np.int64)
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def top_k_accuracy(logits: np.ndarray, labels: np.ndarray, k: int) -> float:
    n_classes = logits.shape[1]
    if k >= n_classes:
        return 1.0
    y = np.asarray(labels).astype(np.int64)
    # stable sort keeps lower indices first among ties
    order = np.argsort(-logits, axis=1, kind="stable")[:, :k]
    return float(np.mean(np.any(order == y[:, None], axis=1)))


def evaluate(model, features: np.ndarray, labels: np.ndarray, loss: LossSpec,
             split: str = "train", top_k: int = 5) -> MetricReport:
    """Score an assembled global model on a full data split."""
    rows = model.silo_rows(features)
    z = embedding_sum(model.specs, model.blocks, rows)
    report = MetricReport(split=split, loss=composite_loss(z, labels, loss), n_samples=len(labels))
    if loss.kind == "binary_cross_entropy_with_logit":
        pred = predictions(z, loss)
        report.accuracy = accuracy(pred, labels)
        report.f1 = f1_score(pred, labels)
    elif loss.kind == "softmax_cross_entropy":
        pred = predictions(z, loss)
        report.accuracy = accuracy(pred, labels)
        report.top_k = top_k
        report.top_k_accuracy = top_k_accuracy(z, labels, top_k)
    return report


def clock_to_target(points: Iterable[tuple[float, float]], target: float) -> float:
    """First clock value at which the loss is at or below ``target`` (inf if never)."""
    for clock, loss in points:
        if loss is not None and loss <= target:
            return float(clock)
    return float("inf")


def loss_at_fraction(points: Sequence[tuple[float, float]], budget: float, fraction: float = 0.8) -> float:
    """Last recorded loss at or before ``fraction * budget`` on the clock."""
    cutoff = fraction * budget
    best = None
    for clock, loss in points:
        if clock <= cutoff and loss is not None:
            best = loss
    if best is None:
        raise ValueError("no loss recorded before the cutoff")
    return float(best)
