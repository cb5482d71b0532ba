"""Image mixing: rectangular paste regions, soft labels, and variant dispatch.

Region arithmetic follows the usual integer CutMix recipe exactly: cut sizes
are floored, half-widths use integer division by 2, and the bounds are clipped
to the image before the mixing ratio is re-derived from the surviving area.
The pixel-level baselines (Gaussian blur, color jitter) live here too.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .samplers import SamplingDistribution


class MixVariant(str, enum.Enum):
    CMO = "cmo"
    CMO_BACK = "cmo_back"
    CMO_MINOR = "cmo_minor"
    CUTMIX_PLAIN = "cutmix_plain"
    MIXUP_Q = "mixup_q"
    BLUR_OVERSAMPLE = "blur_oversample"
    JITTER_OVERSAMPLE = "jitter_oversample"


PAIRED_VARIANTS = (
    MixVariant.CMO,
    MixVariant.CMO_BACK,
    MixVariant.CMO_MINOR,
    MixVariant.CUTMIX_PLAIN,
    MixVariant.MIXUP_Q,
)


@dataclass(frozen=True)
class MixRegion:
    """Half-open paste rectangle [x1, x2) x [y1, y2) with raw and area-adjusted ratios."""

    x1: int
    y1: int
    x2: int
    y2: int
    lambda_raw: float
    lambda_adj: float

    def __post_init__(self):
        if not (0 <= self.x1 <= self.x2 and 0 <= self.y1 <= self.y2):
            raise ValueError("degenerate region bounds")
        if not (0.0 <= self.lambda_raw <= 1.0 and 0.0 <= self.lambda_adj <= 1.0):
            raise ValueError("mixing ratios must lie in [0, 1]")

    @property
    def area(self) -> int:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclass(frozen=True)
class SoftLabel:
    """Length-C probability vector used as a mixed training target."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.min() < 0 or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("soft label must be a probability vector")
        object.__setattr__(self, "probs", p)


@dataclass(frozen=True)
class MixedSample:
    """One composited training example with its two source labels."""

    image: np.ndarray
    y_b: int
    y_f: int
    lambda_adj: float

    def __post_init__(self):
        if not 0.0 <= self.lambda_adj <= 1.0:
            raise ValueError("lambda_adj must lie in [0, 1]")


def draw_lambda(alpha: float, rng: np.random.Generator) -> float:
    """Mixing ratio from Beta(alpha, alpha)."""
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    return float(rng.beta(alpha, alpha))


def region_at(cx: int, cy: int, width: int, height: int, lambda_raw: float) -> MixRegion:
    """Paste rectangle centered near (cx, cy), integer arithmetic with clipping."""
    cut_w = int(width * np.sqrt(1.0 - lambda_raw))
    cut_h = int(height * np.sqrt(1.0 - lambda_raw))
    x1 = int(np.clip(cx - cut_w // 2, 0, width))
    x2 = int(np.clip(cx + cut_w // 2, 0, width))
    y1 = int(np.clip(cy - cut_h // 2, 0, height))
    y2 = int(np.clip(cy + cut_h // 2, 0, height))
    adj = 1.0 - (x2 - x1) * (y2 - y1) / (width * height)
    return MixRegion(x1=x1, y1=y1, x2=x2, y2=y2, lambda_raw=lambda_raw, lambda_adj=adj)


def sample_region(width: int, height: int, lambda_raw: float, rng: np.random.Generator) -> MixRegion:
    """Random-center paste rectangle for the given raw ratio."""
    if width < 1 or height < 1:
        raise ValueError("image dimensions must be >= 1")
    if not 0.0 <= lambda_raw <= 1.0:
        raise ValueError("lambda_raw must lie in [0, 1]")
    cx = int(rng.integers(width))
    cy = int(rng.integers(height))
    return region_at(cx, cy, width, height, lambda_raw)


def adjusted_lambda(region: MixRegion, width: int, height: int) -> float:
    """Background share after clipping: 1 - pasted_area / image_area."""
    return 1.0 - region.area / (width * height)


def cutmix(x_b: np.ndarray, x_f: np.ndarray, region: MixRegion) -> np.ndarray:
    """Paste the region of x_f onto a copy of x_b. Works on (W, H, C) or (N, W, H, C)."""
    if x_b.shape != x_f.shape:
        raise ValueError(f"shape mismatch {x_b.shape} vs {x_f.shape}")
    out = x_b.copy()
    out[..., region.x1:region.x2, region.y1:region.y2, :] = (
        x_f[..., region.x1:region.x2, region.y1:region.y2, :]
    )
    return out


def mixup(x_b: np.ndarray, x_f: np.ndarray, lam: float) -> np.ndarray:
    """Elementwise interpolation lam * x_b + (1 - lam) * x_f."""
    if x_b.shape != x_f.shape:
        raise ValueError(f"shape mismatch {x_b.shape} vs {x_f.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lam must lie in [0, 1]")
    return lam * x_b + (1.0 - lam) * x_f


def mix_labels(y_b: int, y_f: int, lambda_adj: float, num_classes: int) -> SoftLabel:
    """Convex combination of two one-hot labels."""
    if not (0 <= y_b < num_classes and 0 <= y_f < num_classes):
        raise ValueError("class index out of range")
    if not 0.0 <= lambda_adj <= 1.0:
        raise ValueError("lambda_adj must lie in [0, 1]")
    probs = np.zeros(num_classes)
    probs[y_b] += lambda_adj
    probs[y_f] += 1.0 - lambda_adj
    return SoftLabel(probs)


def make_pair_sources(
    variant: MixVariant,
    empirical: SamplingDistribution,
    weighted: SamplingDistribution,
) -> tuple[SamplingDistribution, SamplingDistribution] | None:
    """(background, foreground) draw distributions for a paired variant.

    Returns None for the pixel-level oversampling variants, which do not pair
    two images; the trainer handles those directly.
    """
    table = {
        MixVariant.CMO: (empirical, weighted),
        MixVariant.CMO_BACK: (weighted, empirical),
        MixVariant.CMO_MINOR: (weighted, weighted),
        MixVariant.CUTMIX_PLAIN: (empirical, empirical),
        MixVariant.MIXUP_Q: (empirical, weighted),
    }
    if variant in table:
        return table[variant]
    if variant in (MixVariant.BLUR_OVERSAMPLE, MixVariant.JITTER_OVERSAMPLE):
        return None
    raise ValueError(f"unknown variant {variant!r}")


def mix_pair(
    x_b: np.ndarray, y_b: int, x_f: np.ndarray, y_f: int,
    lam: float, region: MixRegion | None = None, use_mixup: bool = False,
) -> MixedSample:
    """Composite one (background, foreground) pair into a MixedSample."""
    if use_mixup:
        return MixedSample(image=mixup(x_b, x_f, lam), y_b=y_b, y_f=y_f, lambda_adj=lam)
    if region is None:
        raise ValueError("cutmix compositing needs a region")
    return MixedSample(image=cutmix(x_b, x_f, region), y_b=y_b, y_f=y_f, lambda_adj=region.lambda_adj)


# --- pixel-level baselines ------------------------------------------------


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = size // 2
    d = np.arange(size) - half
    k = np.exp(-0.5 * (d / max(sigma, 1e-12)) ** 2)
    return k / k.sum()


def gaussian_blur(x: np.ndarray, kernel_size: int, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with edge-replicate padding."""
    if kernel_size % 2 == 0 or kernel_size < 1:
        raise ValueError("kernel size must be odd and positive")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    k = _gaussian_kernel(kernel_size, sigma)
    half = kernel_size // 2
    out = np.asarray(x, dtype=np.float64)
    for axis in (0, 1):
        pad = [(0, 0)] * out.ndim
        pad[axis] = (half, half)
        padded = np.pad(out, pad, mode="edge")
        acc = np.zeros_like(out)
        for i, w in enumerate(k):
            sl = [slice(None)] * out.ndim
            sl[axis] = slice(i, i + out.shape[axis])
            acc += w * padded[tuple(sl)]
        out = acc
    return np.clip(out, 0.0, 1.0)


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Vectorized RGB -> HSV on (..., 3) arrays in [0, 1]."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    v = maxc
    span = maxc - minc
    s = np.where(maxc > 0, span / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe = np.where(span > 0, span, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(span > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    """Vectorized HSV -> RGB on (..., 3) arrays."""
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(np.int64) % 6
    choices_r = [v, q, p, p, t, v]
    choices_g = [t, v, v, q, p, p]
    choices_b = [p, p, t, v, v, q]
    r = np.select([i == n for n in range(6)], choices_r)
    g = np.select([i == n for n in range(6)], choices_g)
    b = np.select([i == n for n in range(6)], choices_b)
    return np.stack([r, g, b], axis=-1)


def color_jitter(x: np.ndarray, brightness_factor: float, hue_shift: float) -> np.ndarray:
    """Scale brightness and rotate hue by hue_shift radians, clamped to [0, 1].

    Single-channel images only get the brightness scaling.
    """
    if brightness_factor < 0:
        raise ValueError("brightness factor must be non-negative")
    out = np.clip(np.asarray(x, dtype=np.float64) * brightness_factor, 0.0, 1.0)
    if hue_shift != 0.0 and out.shape[-1] == 3:
        hsv = rgb_to_hsv(out)
        hsv[..., 0] = (hsv[..., 0] + hue_shift / (2.0 * np.pi)) % 1.0
        out = np.clip(hsv_to_rgb(hsv), 0.0, 1.0)
    return out


def random_blur(
    x: np.ndarray, rng: np.random.Generator,
    kernel_sizes: tuple[int, ...] = (5, 7), sigma_range: tuple[float, float] = (0.1, 5.0),
) -> np.ndarray:
    """Blur with kernel size drawn from the configured set and sigma uniform in range."""
    size = int(kernel_sizes[rng.integers(len(kernel_sizes))])
    sigma = float(rng.uniform(*sigma_range))
    return gaussian_blur(x, size, sigma)


def random_jitter(
    x: np.ndarray, rng: np.random.Generator, brightness: float = 0.5, hue: float = 0.3
) -> np.ndarray:
    """Jitter with brightness factor in [1-b, 1+b] and hue shift within +-hue*pi."""
    factor = float(rng.uniform(1.0 - brightness, 1.0 + brightness))
    shift = float(rng.uniform(-hue * np.pi, hue * np.pi))
    return color_jitter(x, factor, shift)
