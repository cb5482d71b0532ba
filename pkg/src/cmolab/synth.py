"""Synthetic context-shift benchmark: class glyphs composited onto textured backgrounds.

Each class owns a deterministic glyph (regular polygon with a fixed color and
orientation). Backgrounds are procedural textures indexed by a background id.
Head classes train on the full background pool; tail classes see only a small
exposure set, while the balanced test split draws backgrounds uniformly from
the full pool. This is the failure mode minority oversampling targets: a model
can shortcut tail classes through their one training context.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass

import numpy as np

from .datasets import ClassHistogram, Dataset, quantize_pixels

_GOLDEN = 0.6180339887498949


@dataclass(frozen=True)
class ContextShiftSpec:
    """Generator parameters for the context-shift benchmark."""

    num_classes: int
    backgrounds: int
    tail_exposure: int
    image_side: int = 32
    channels: int = 3
    noise: float = 0.03
    test_per_class: int = 20
    head_threshold: int | None = None  # counts above => head; default 0.2 * max count

    def __post_init__(self):
        if self.backgrounds < 2:
            raise ValueError("background pool size must be >= 2")
        if not 1 <= self.tail_exposure <= self.backgrounds:
            raise ValueError("tail exposure must be in [1, backgrounds]")
        if self.image_side < 8:
            raise ValueError("image side must be >= 8")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if self.test_per_class < 1:
            raise ValueError("test_per_class must be >= 1")
        if not 0.0 <= self.noise <= 0.5:
            raise ValueError("noise level must be in [0, 0.5]")


def class_glyph(k: int, num_classes: int) -> tuple[int, float, tuple[float, float, float]]:
    """Deterministic glyph descriptor for class k: (polygon sides, rotation, rgb fill)."""
    sides = 3 + (k % 5)
    rotation = (k * _GOLDEN * 2.0 * np.pi) % (2.0 * np.pi)
    hue = (k / num_classes) % 1.0
    value = 0.95 if k % 2 == 0 else 0.50
    rgb = colorsys.hsv_to_rgb(hue, 0.95, value)
    return sides, float(rotation), rgb


def background_texture(bg_id: int, side: int, channels: int) -> np.ndarray:
    """Procedural texture for one background id, values kept in a mid band."""
    xs, ys = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    freq = 2.0 * np.pi * (1.5 + (bg_id % 3)) / side
    phase = bg_id * 1.7
    kind = bg_id % 4
    if kind == 0:
        wave = np.sin(freq * (xs + ys) + phase)
    elif kind == 1:
        wave = np.sign(np.sin(freq * xs + phase) * np.sin(freq * ys + phase))
    elif kind == 2:
        cx = cy = (side - 1) / 2.0
        wave = np.sin(freq * np.hypot(xs - cx, ys - cy) * 1.5 + phase)
    else:
        wave = np.sin(freq * ys + phase) + 0.5 * np.sin(2.3 * freq * xs)
    wave = wave / max(1.0, np.abs(wave).max())
    base_hue = (bg_id * _GOLDEN) % 1.0
    base = colorsys.hsv_to_rgb(base_hue, 0.55, 0.62)
    tex = np.empty((side, side, 3))
    for c in range(3):
        tex[..., c] = np.clip(base[c] + 0.18 * wave, 0.15, 0.85)
    if channels == 1:
        tex = tex.mean(axis=2, keepdims=True)
    return tex


def _polygon_mask(side: int, cx: float, cy: float, radius: float, nsides: int, rotation: float) -> np.ndarray:
    angles = rotation + 2.0 * np.pi * np.arange(nsides) / nsides
    vx = cx + radius * np.cos(angles)
    vy = cy + radius * np.sin(angles)
    xs, ys = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    inside = np.ones((side, side), dtype=bool)
    for i in range(nsides):
        j = (i + 1) % nsides
        # vertices are counter-clockwise; keep points left of every edge
        cross = (vx[j] - vx[i]) * (ys - vy[i]) - (vy[j] - vy[i]) * (xs - vx[i])
        inside &= cross >= 0.0
    return inside


def head_classes(spec: ContextShiftSpec, hist: ClassHistogram) -> frozenset[int]:
    """Classes treated as context-rich heads (full background pool in training)."""
    threshold = spec.head_threshold
    if threshold is None:
        threshold = int(round(0.2 * max(hist.counts)))
    return frozenset(k for k, n in enumerate(hist.counts) if n > threshold)


def allowed_backgrounds(spec: ContextShiftSpec, hist: ClassHistogram) -> dict[int, tuple[int, ...]]:
    """Training background ids available to each class."""
    heads = head_classes(spec, hist)
    full = tuple(range(spec.backgrounds))
    out = {}
    for k in range(spec.num_classes):
        if k in heads:
            out[k] = full
        else:
            out[k] = tuple((k + j) % spec.backgrounds for j in range(spec.tail_exposure))
    return out


def _render(spec: ContextShiftSpec, k: int, bg_id: int, textures: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    side = spec.image_side
    img = textures[bg_id].copy()
    sides, rotation, rgb = class_glyph(k, spec.num_classes)
    # glyphs large enough that random paste rectangles usually carry class evidence
    radius = 0.40 * side * rng.uniform(0.9, 1.1)
    cx = (side - 1) / 2.0 + rng.uniform(-0.05, 0.05) * side
    cy = (side - 1) / 2.0 + rng.uniform(-0.05, 0.05) * side
    mask = _polygon_mask(side, cx, cy, radius, sides, rotation)
    fill = np.asarray(rgb if spec.channels == 3 else [np.mean(rgb)])
    img[mask] = fill
    if spec.noise > 0.0:
        img = img + rng.normal(0.0, spec.noise, size=img.shape)
    return quantize_pixels(img)


def synth_context_shift(
    spec: ContextShiftSpec, hist: ClassHistogram, rng: np.random.Generator
) -> tuple[Dataset, Dataset]:
    """Generate (train, test) splits with restricted tail-class training contexts."""
    if hist.num_classes != spec.num_classes:
        raise ValueError("histogram and spec disagree on class count")
    allowed = allowed_backgrounds(spec, hist)
    textures = np.stack(
        [background_texture(b, spec.image_side, spec.channels) for b in range(spec.backgrounds)]
    )

    def make_split(counts: list[int], pools: dict[int, tuple[int, ...]], split: str):
        images, labels, meta = [], [], []
        for k, n in enumerate(counts):
            pool = np.asarray(pools[k])
            for _ in range(n):
                bg = int(pool[rng.integers(len(pool))])
                images.append(_render(spec, k, bg, textures, rng))
                labels.append(k)
                meta.append({"split": split, "class": k, "background": bg})
        return Dataset.from_arrays(
            np.stack(images), np.asarray(labels, dtype=np.int64), spec.num_classes, meta=meta
        )

    full_pool = {k: tuple(range(spec.backgrounds)) for k in range(spec.num_classes)}
    train = make_split(list(hist.counts), allowed, "train")
    test = make_split([spec.test_per_class] * spec.num_classes, full_pool, "test")
    return train, test
