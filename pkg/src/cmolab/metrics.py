"""Accuracy and calibration reporting.

Shot-group accuracies are unweighted means over the member classes'
per-class accuracies. Calibration uses equal-width bins over the max softmax
probability: ece = sum_b (|bin_b| / n) * |acc_b - conf_b|.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .datasets import Dataset, ShotGroups
from .models import Model

CSV_FIXED_COLUMNS = ("overall", "many", "medium", "few", "mean_max_conf", "ece")


@dataclass(frozen=True)
class MetricsReport:
    overall_acc: float
    many_acc: float
    medium_acc: float
    few_acc: float
    per_class_acc: tuple[float, ...]
    mean_max_confidence: float
    ece: float

    def to_dict(self) -> dict:
        def scrub(v):
            return None if isinstance(v, float) and math.isnan(v) else v

        return {
            "overall": scrub(self.overall_acc),
            "many": scrub(self.many_acc),
            "medium": scrub(self.medium_acc),
            "few": scrub(self.few_acc),
            "mean_max_conf": self.mean_max_confidence,
            "ece": self.ece,
            "per_class": [scrub(a) for a in self.per_class_acc],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        def unscrub(v):
            return float("nan") if v is None else float(v)

        return cls(
            overall_acc=unscrub(d["overall"]),
            many_acc=unscrub(d["many"]),
            medium_acc=unscrub(d["medium"]),
            few_acc=unscrub(d["few"]),
            per_class_acc=tuple(unscrub(a) for a in d["per_class"]),
            mean_max_confidence=float(d["mean_max_conf"]),
            ece=float(d["ece"]),
        )

    def csv_header(self) -> str:
        cols = list(CSV_FIXED_COLUMNS) + [f"acc_class_{k}" for k in range(len(self.per_class_acc))]
        return ",".join(cols)

    def csv_row(self) -> str:
        vals = [self.overall_acc, self.many_acc, self.medium_acc, self.few_acc,
                self.mean_max_confidence, self.ece, *self.per_class_acc]
        return ",".join("" if isinstance(v, float) and math.isnan(v) else f"{v:.6f}" for v in vals)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def calibration(probabilities: np.ndarray, labels: np.ndarray, bins: int = 15) -> tuple[float, float]:
    """(mean max-probability, expected calibration error) over equal-width bins."""
    probs = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or len(probs) != len(labels):
        raise ValueError("need (n, C) probabilities and n labels")
    if np.abs(probs.sum(axis=1) - 1.0).max() > 1e-6:
        raise ValueError("probability rows must sum to 1")
    conf = probs.max(axis=1)
    correct = probs.argmax(axis=1) == labels
    n = len(conf)
    bin_idx = np.minimum((conf * bins).astype(np.int64), bins - 1)
    ece = 0.0
    for b in range(bins):
        mask = bin_idx == b
        if not mask.any():
            continue
        ece += (mask.sum() / n) * abs(correct[mask].mean() - conf[mask].mean())
    return float(conf.mean()), float(ece)


def evaluate(model: Model, test: Dataset, groups: ShotGroups, bins: int = 15, chunk: int = 512) -> MetricsReport:
    """Top-1 accuracy overall / per class / per shot group, plus confidence stats."""
    c = test.num_classes
    present = np.bincount(test.labels, minlength=c)
    if (present == 0).any():
        missing = np.flatnonzero(present == 0).tolist()
        raise ValueError(f"test set has no samples for classes {missing}")
    probs = np.empty((len(test), c))
    for start in range(0, len(test), chunk):
        probs[start:start + chunk] = softmax(model.forward(test.images[start:start + chunk]))
    preds = probs.argmax(axis=1)
    correct = preds == test.labels
    per_class = np.array([correct[test.labels == k].mean() for k in range(c)])

    def group_acc(members: frozenset[int]) -> float:
        if not members:
            return float("nan")
        return float(np.mean([per_class[k] for k in sorted(members)]))

    mean_conf, ece = calibration(probs, test.labels, bins=bins)
    return MetricsReport(
        overall_acc=float(correct.mean()),
        many_acc=group_acc(groups.many),
        medium_acc=group_acc(groups.medium),
        few_acc=group_acc(groups.few),
        per_class_acc=tuple(float(a) for a in per_class),
        mean_max_confidence=mean_conf,
        ece=ece,
    )
