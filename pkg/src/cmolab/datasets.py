"""Long-tailed dataset construction and binary storage.

Datasets are plain numpy containers: an (N, W, H, Ch) pixel array in [0, 1]
plus an integer label vector, with a class histogram kept consistent with the
labels. Long-tailed profiles follow the exponential convention
``n_k = n_max * rho ** (-k / (C - 1))``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

MAGIC = b"CMO1"
_HEADER = struct.Struct("<5I")  # C, N, W, H, Ch


class DatasetFormatError(ValueError):
    """Raised when a dataset file is truncated, corrupt, or wrong version."""


@dataclass(frozen=True)
class LabeledImage:
    """A single W x H x Ch pixel array in [0, 1] with a hard class index."""

    pixels: np.ndarray
    label: int

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or min(px.shape) < 1:
            raise ValueError(f"pixels must be (W, H, Ch) with positive dims, got {px.shape}")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        if self.label < 0:
            raise ValueError("label must be a non-negative class index")


@dataclass(frozen=True)
class ClassHistogram:
    """Per-class sample counts n_k for k in [0, C)."""

    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.counts) < 2:
            raise ValueError("need at least 2 classes")
        if any(c < 1 for c in self.counts):
            raise ValueError("every class count must be >= 1")
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    @property
    def num_classes(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return int(sum(self.counts))

    @classmethod
    def from_labels(cls, labels: np.ndarray, num_classes: int) -> "ClassHistogram":
        counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=num_classes)
        return cls(tuple(int(c) for c in counts))


@dataclass(frozen=True)
class LongTailSpec:
    """Target long-tailed profile: C classes decaying from n_max at ratio rho."""

    num_classes: int
    n_max: int
    rho: float
    profile: str = "exponential"

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.rho < 1:
            raise ValueError("imbalance ratio rho must be >= 1")
        if self.n_max < self.rho:
            raise ValueError("n_max must be >= rho so the smallest class keeps >= 1 sample")
        if self.profile != "exponential":
            raise ValueError(f"unknown profile {self.profile!r}")


class ShotGroups(NamedTuple):
    many: frozenset[int]
    medium: frozenset[int]
    few: frozenset[int]


@dataclass
class Dataset:
    """An ordered image collection with a histogram consistent with its labels.

    ``meta`` optionally carries per-image bookkeeping (background id, split)
    written to a sidecar JSON manifest on save.
    """

    images: np.ndarray  # (N, W, H, Ch) float64 in [0, 1]
    labels: np.ndarray  # (N,) int64
    histogram: ClassHistogram
    meta: list[dict] | None = field(default=None)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ValueError("images must have shape (N, W, H, Ch)")
        if len(self.labels) != len(self.images):
            raise ValueError("images and labels disagree on N")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")
        recount = ClassHistogram.from_labels(self.labels, self.histogram.num_classes)
        if recount.counts != self.histogram.counts:
            raise ValueError("stored histogram does not match labels")
        if self.meta is not None and len(self.meta) != len(self.images):
            raise ValueError("meta must have one entry per image")

    def __len__(self) -> int:
        return len(self.images)

    def __getitem__(self, i: int) -> LabeledImage:
        return LabeledImage(pixels=self.images[i], label=int(self.labels[i]))

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    @property
    def num_classes(self) -> int:
        return self.histogram.num_classes

    @classmethod
    def from_arrays(
        cls,
        images: np.ndarray,
        labels: np.ndarray,
        num_classes: int,
        meta: list[dict] | None = None,
    ) -> "Dataset":
        hist = ClassHistogram.from_labels(labels, num_classes)
        return cls(images=images, labels=labels, histogram=hist, meta=meta)


def quantize_pixels(pixels: np.ndarray) -> np.ndarray:
    """Snap pixels to the 8-bit grid used by on-disk storage."""
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0) / 255.0


def build_longtail_profile(spec: LongTailSpec) -> ClassHistogram:
    """Exponential long-tailed counts n_k = round(n_max * rho^(-k/(C-1))), floored at 1."""
    c = spec.num_classes
    ks = np.arange(c, dtype=np.float64)
    raw = spec.n_max * spec.rho ** (-ks / (c - 1))
    counts = np.maximum(np.floor(raw + 0.5).astype(np.int64), 1)  # round half up
    return ClassHistogram(tuple(int(n) for n in counts))


def imbalance_ratio(hist: ClassHistogram) -> float:
    """max_k n_k / min_k n_k."""
    return max(hist.counts) / min(hist.counts)


def shot_groups(hist: ClassHistogram, many_threshold: int, few_threshold: int) -> ShotGroups:
    """Partition classes into many (> many_threshold), few (< few_threshold), medium (rest)."""
    if few_threshold >= many_threshold:
        raise ValueError("few_threshold must be strictly below many_threshold")
    many, medium, few = set(), set(), set()
    for k, n in enumerate(hist.counts):
        if n > many_threshold:
            many.add(k)
        elif n < few_threshold:
            few.add(k)
        else:
            medium.add(k)
    return ShotGroups(frozenset(many), frozenset(medium), frozenset(few))


def default_shot_thresholds(hist: ClassHistogram) -> tuple[int, int]:
    """Desk-scale thresholds: the reference 100/20-of-500 split scaled to this profile."""
    n_max = max(hist.counts)
    many = max(int(round(0.2 * n_max)), 2)
    few = max(int(round(0.04 * n_max)), 1)
    if few >= many:
        few = many - 1
    return many, few


def subsample_longtail(source: Dataset, hist: ClassHistogram, rng: np.random.Generator) -> Dataset:
    """Draw hist.counts[k] samples per class uniformly without replacement."""
    if hist.num_classes != source.num_classes:
        raise ValueError("histogram and source disagree on class count")
    picked = []
    for k, want in enumerate(hist.counts):
        pool = np.flatnonzero(source.labels == k)
        if len(pool) < want:
            raise ValueError(f"class {k} has {len(pool)} samples, need {want}")
        picked.append(rng.choice(pool, size=want, replace=False))
    idx = np.concatenate(picked)
    meta = [source.meta[i] for i in idx] if source.meta is not None else None
    return Dataset(images=source.images[idx], labels=source.labels[idx], histogram=hist, meta=meta)


def save_dataset(ds: Dataset, path: str | Path) -> Path:
    """Write the binary container (8-bit pixels) plus a JSON sidecar when meta exists."""
    path = Path(path)
    n, w, h, ch = (len(ds),) + ds.image_shape
    quant = np.round(np.clip(ds.images, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(ds.num_classes, n, w, h, ch))
        for i in range(n):
            fh.write(struct.pack("<I", int(ds.labels[i])))
            fh.write(quant[i].tobytes(order="C"))
    if ds.meta is not None:
        sidecar_path(path).write_text(json.dumps(ds.meta, indent=1))
    return path


def sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".manifest.json")


def load_dataset(path: str | Path) -> Dataset:
    """Read a dataset container written by :func:`save_dataset`."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 4 or blob[:3] != MAGIC[:3]:
        raise DatasetFormatError(f"{path}: bad magic, not a dataset container")
    if blob[:4] != MAGIC:
        raise DatasetFormatError(f"{path}: unsupported container version {blob[3:4]!r}")
    if len(blob) < 4 + _HEADER.size:
        raise DatasetFormatError(f"{path}: truncated header")
    c, n, w, h, ch = _HEADER.unpack_from(blob, 4)
    rec = 4 + w * h * ch
    body = blob[4 + _HEADER.size:]
    if len(body) != n * rec:
        raise DatasetFormatError(f"{path}: expected {n * rec} record bytes, found {len(body)}")
    labels = np.empty(n, dtype=np.int64)
    images = np.empty((n, w, h, ch), dtype=np.float64)
    for i in range(n):
        off = i * rec
        (labels[i],) = struct.unpack_from("<I", body, off)
        pix = np.frombuffer(body, dtype=np.uint8, count=w * h * ch, offset=off + 4)
        images[i] = pix.reshape(w, h, ch) / 255.0
    meta = None
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text())
    hist = ClassHistogram.from_labels(labels, c)
    return Dataset(images=images, labels=labels, histogram=hist, meta=meta)
