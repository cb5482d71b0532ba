"""Sampling distributions for long-tailed training.

The empirical distribution draws instances at their data frequency; the
weighted distribution inflates rare classes, either by an inverse power of the
class count (exponent r: 1 recovers inverse class frequency, 1/2 the smoothed
variant, 0 the class-balanced sampler) or by the effective sample number
E(n) = (1 - beta^n) / (1 - beta) with beta = (N - 1) / N.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import ClassHistogram, Dataset

_TOL = 1e-9


@dataclass(frozen=True)
class WeightStrategy:
    """How class sampling weights are derived from class counts."""

    kind: str  # "power" | "effective_number"
    exponent: float = 1.0

    def __post_init__(self):
        if self.kind not in ("power", "effective_number"):
            raise ValueError(f"unknown weighting kind {self.kind!r}")
        if not np.isfinite(self.exponent) or self.exponent < 0:
            raise ValueError("power exponent must be finite and >= 0")

    @classmethod
    def power(cls, exponent: float) -> "WeightStrategy":
        return cls(kind="power", exponent=float(exponent))

    @classmethod
    def effective_number(cls) -> "WeightStrategy":
        return cls(kind="effective_number")


@dataclass(frozen=True)
class SamplingDistribution:
    """Normalized class- and instance-level draw probabilities."""

    class_probs: np.ndarray
    per_instance_weights: np.ndarray

    def __post_init__(self):
        cp = np.asarray(self.class_probs, dtype=np.float64)
        iw = np.asarray(self.per_instance_weights, dtype=np.float64)
        if cp.min() < 0 or iw.min() < 0:
            raise ValueError("probabilities must be non-negative")
        if abs(cp.sum() - 1.0) > _TOL or abs(iw.sum() - 1.0) > _TOL:
            raise ValueError("probabilities must sum to 1")
        object.__setattr__(self, "class_probs", cp)
        object.__setattr__(self, "per_instance_weights", iw)

    @property
    def num_instances(self) -> int:
        return len(self.per_instance_weights)


@dataclass(frozen=True)
class ClassWeights:
    """Positive per-class loss weights normalized to mean 1."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.min() <= 0:
            raise ValueError("class weights must be positive")
        if abs(w.mean() - 1.0) > _TOL:
            raise ValueError("class weights must have mean 1")
        object.__setattr__(self, "weights", w)


def effective_number(n_k: int, total: int) -> float:
    """(1 - beta^n_k) / (1 - beta) with beta = (total - 1) / total."""
    if not 1 <= n_k <= total or total < 2:
        raise ValueError("need 1 <= n_k <= total and total >= 2")
    beta = (total - 1) / total
    return (1.0 - beta**n_k) / (1.0 - beta)


def _canonical_labels(hist: ClassHistogram) -> np.ndarray:
    return np.repeat(np.arange(hist.num_classes), hist.counts)


def _instance_weights(hist: ClassHistogram, class_probs: np.ndarray, labels: np.ndarray | None) -> np.ndarray:
    if labels is None:
        labels = _canonical_labels(hist)
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.asarray(hist.counts, dtype=np.float64)
    weights = class_probs[labels] / counts[labels]
    return weights / weights.sum()


def weighted_distribution(
    hist: ClassHistogram, strategy: WeightStrategy, labels: np.ndarray | None = None
) -> SamplingDistribution:
    """Class probabilities inversely weighted by count (power r) or by effective number.

    Instance weights split each class probability uniformly over its members;
    ``labels`` maps instance index to class (canonical class-grouped order when
    omitted).
    """
    counts = np.asarray(hist.counts, dtype=np.float64)
    if strategy.kind == "power":
        raw = counts ** (-strategy.exponent)
    else:
        total = hist.total
        raw = np.array([1.0 / effective_number(int(n), total) for n in hist.counts])
    class_probs = raw / raw.sum()
    return SamplingDistribution(class_probs, _instance_weights(hist, class_probs, labels))


def empirical_distribution(hist: ClassHistogram, labels: np.ndarray | None = None) -> SamplingDistribution:
    """The original data distribution: class prob n_k / N, instances uniform."""
    counts = np.asarray(hist.counts, dtype=np.float64)
    class_probs = counts / counts.sum()
    return SamplingDistribution(class_probs, _instance_weights(hist, class_probs, labels))


def draw_indices(dist: SamplingDistribution, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw instance indices with replacement at the per-instance probabilities."""
    return rng.choice(dist.num_instances, size=size, replace=True, p=dist.per_instance_weights)


def draw_instance(dist: SamplingDistribution, rng: np.random.Generator) -> int:
    return int(draw_indices(dist, rng, 1)[0])


def ros_expand(ds: Dataset, rng: np.random.Generator) -> Dataset:
    """Random oversampling: replicate every class with replacement up to the max count."""
    target = max(ds.histogram.counts)
    extra = []
    for k, n in enumerate(ds.histogram.counts):
        if n < target:
            pool = np.flatnonzero(ds.labels == k)
            extra.append(rng.choice(pool, size=target - n, replace=True))
    if not extra:
        return Dataset(
            images=ds.images.copy(), labels=ds.labels.copy(), histogram=ds.histogram,
            meta=list(ds.meta) if ds.meta is not None else None,
        )
    idx = np.concatenate([np.arange(len(ds))] + extra)
    meta = [ds.meta[i] for i in idx] if ds.meta is not None else None
    hist = ClassHistogram((target,) * ds.num_classes)
    return Dataset(images=ds.images[idx], labels=ds.labels[idx], histogram=hist, meta=meta)


def drw_class_weights(hist: ClassHistogram) -> ClassWeights:
    """Deferred re-weighting coefficients: inverse effective number, mean-1 normalized."""
    total = hist.total
    raw = np.array([1.0 / effective_number(int(n), total) for n in hist.counts])
    return ClassWeights(raw / raw.mean())
