"""Training loop: paired-loader mixing, soft-target loss, SGD, LR schedule.

Every source of randomness is drawn from a keyed substream of the run seed
(model init, per-epoch shuffles, one stream per batch index), so a run is a
pure function of (config, dataset, seed) and batch preparation can fan out to
worker threads without changing the result.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .datasets import Dataset, default_shot_thresholds, shot_groups
from .mixing import (
    MixVariant,
    cutmix,
    draw_lambda,
    make_pair_sources,
    mixup,
    random_blur,
    random_jitter,
    sample_region,
)
from .models import Model, build_model
from .samplers import (
    WeightStrategy,
    draw_indices,
    drw_class_weights,
    empirical_distribution,
    ros_expand,
    weighted_distribution,
)

_INIT, _PERM, _BATCH, _ROS = 0, 1, 2, 3


class TrainingError(RuntimeError):
    """Raised when training hits non-finite numbers, with epoch/batch context."""


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator independent per (seed, key); keys index epochs and batches."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass
class TrainConfig:
    """Full experiment specification for one training run."""

    epochs: int
    batch_size: int
    base_lr: float
    warmup_epochs: int = 0
    decay_epochs: tuple[int, ...] = ()
    decay_factor: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 2e-4
    alpha: float = 1.0
    variant: MixVariant = MixVariant.CMO
    weighting: WeightStrategy = field(default_factory=lambda: WeightStrategy.power(1.0))
    drw_epoch: int | None = None
    cmo_off_last: int = 3
    seed: int = 0
    many_threshold: int | None = None
    few_threshold: int | None = None
    ros: bool = False
    per_image_regions: bool = False
    arch: str = "tinyconv"
    hidden_sizes: tuple[int, ...] = (64,)
    conv_channels: tuple[int, ...] = (8, 16)
    blur_kernel_sizes: tuple[int, ...] = (5, 7)
    blur_sigma: tuple[float, float] = (0.1, 5.0)
    jitter_brightness: float = 0.5
    jitter_hue: float = 0.3

    def __post_init__(self):
        self.variant = MixVariant(self.variant)
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.base_lr <= 0 or self.alpha <= 0:
            raise ValueError("base_lr and alpha must be positive")
        if not 0 <= self.warmup_epochs <= self.epochs:
            raise ValueError("warmup_epochs out of range")
        self.decay_epochs = tuple(sorted(int(e) for e in self.decay_epochs))
        if self.decay_epochs:
            if self.warmup_epochs >= self.decay_epochs[0] or self.decay_epochs[-1] >= self.epochs:
                raise ValueError("need warmup < first decay epoch and all decays < epochs")
        if not 0 <= self.cmo_off_last <= self.epochs:
            raise ValueError("cmo_off_last must be in [0, epochs]")
        if self.drw_epoch is not None and not 0 <= self.drw_epoch < self.epochs:
            raise ValueError("drw_epoch must be in [0, epochs)")


@dataclass
class EpochStats:
    epoch: int
    lr: float
    loss: float
    test_acc: float | None = None


@dataclass
class TrainHistory:
    records: list[EpochStats] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "loss": [r.loss for r in self.records],
            "lr": [r.lr for r in self.records],
            "test_acc": [r.test_acc for r in self.records],
        }


def lr_at(epoch: int, config: TrainConfig) -> float:
    """Linear warmup to base, then cumulative step decay."""
    if epoch >= config.epochs:
        raise ValueError("epoch beyond configured run length")
    if epoch < config.warmup_epochs:
        return config.base_lr * (epoch + 1) / config.warmup_epochs
    lr = config.base_lr
    for d in config.decay_epochs:
        if epoch >= d:
            lr *= config.decay_factor
    return lr


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def soft_cross_entropy(
    logits: np.ndarray,
    y_b: np.ndarray,
    y_f: np.ndarray,
    lam: float | np.ndarray,
    class_weights: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Two-term mixed cross-entropy and its gradient w.r.t. the logits.

    loss = mean_i [lam * w[y_b] * CE(logits_i, y_b_i) + (1 - lam) * w[y_f] * CE(logits_i, y_f_i)],
    equal to the soft-label cross-entropy against lam-mixed one-hot targets when
    weights are absent. ``lam`` may be a scalar or one value per sample.
    """
    logits = np.asarray(logits, dtype=np.float64)
    n, _ = logits.shape
    y_b = np.asarray(y_b, dtype=np.int64)
    y_f = np.asarray(y_f, dtype=np.int64)
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), (n,))
    if lam.min() < 0.0 or lam.max() > 1.0:
        raise ValueError("mixing ratio must lie in [0, 1]")
    w_b = class_weights[y_b] if class_weights is not None else np.ones(n)
    w_f = class_weights[y_f] if class_weights is not None else np.ones(n)
    logp = _log_softmax(logits)
    rows = np.arange(n)
    per = lam * w_b * (-logp[rows, y_b]) + (1.0 - lam) * w_f * (-logp[rows, y_f])
    loss = float(per.mean())
    p = np.exp(logp)
    coef = lam * w_b + (1.0 - lam) * w_f
    dlogits = coef[:, None] * p
    np.subtract.at(dlogits, (rows, y_b), lam * w_b)
    np.subtract.at(dlogits, (rows, y_f), (1.0 - lam) * w_f)
    dlogits /= n
    return loss, dlogits


class SGD:
    """SGD with momentum and (coupled) weight decay: v <- m*v + g + wd*p; p <- p - lr*v."""

    def __init__(self, momentum: float = 0.9, weight_decay: float = 0.0):
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocities: dict[str, np.ndarray] = {}

    def step(self, model: Model, grads: dict[str, np.ndarray], lr: float) -> Model:
        for name, p in model.params.items():
            g = grads[name]
            if not np.isfinite(g).all():
                raise TrainingError(f"non-finite gradient in parameter {name!r}")
            v = self.velocities.get(name)
            if v is None:
                v = np.zeros_like(p)
            v = self.momentum * v + g + self.weight_decay * p
            self.velocities[name] = v
            p -= lr * v
        return model


def _plain_accuracy(model: Model, test: Dataset, chunk: int = 512) -> float:
    hits = 0
    for start in range(0, len(test), chunk):
        logits = model.forward(test.images[start:start + chunk])
        hits += int((logits.argmax(axis=1) == test.labels[start:start + chunk]).sum())
    return hits / len(test)


def resolve_thresholds(config: TrainConfig, ds: Dataset) -> tuple[int, int]:
    many, few = default_shot_thresholds(ds.histogram)
    if config.many_threshold is not None:
        many = config.many_threshold
    if config.few_threshold is not None:
        few = config.few_threshold
    return many, few


def train(
    config: TrainConfig,
    dataset: Dataset,
    test: Dataset | None = None,
    workers: int = 1,
) -> tuple[Model, TrainHistory]:
    """Run the full schedule; deterministic given (config, dataset, seed).

    Per batch: a background batch comes from the shuffled pass over the data
    (or a weighted draw when the variant flips sources), a foreground batch is
    drawn with replacement from its distribution, one mixing ratio and region
    are shared across the batch, and the mixed soft-target loss is stepped.
    Deferred re-weighting switches on at ``drw_epoch``; mixing is disabled for
    the last ``cmo_off_last`` epochs.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    seed = config.seed
    ds = ros_expand(dataset, substream(seed, _ROS)) if config.ros else dataset
    images, labels = ds.images, ds.labels
    n = len(ds)
    w, h, _ = ds.image_shape
    bs = config.batch_size
    n_batches = (n + bs - 1) // bs

    model = build_model(
        config.arch, ds.image_shape, ds.num_classes, substream(seed, _INIT),
        hidden_sizes=config.hidden_sizes, conv_channels=config.conv_channels,
    )
    original = empirical_distribution(ds.histogram, labels)
    weighted = weighted_distribution(ds.histogram, config.weighting, labels)
    pair = make_pair_sources(config.variant, original, weighted)
    balanced = weighted_distribution(ds.histogram, WeightStrategy.power(0.0), labels)
    many_thr, _ = resolve_thresholds(config, ds)
    minority = np.array([cnt <= many_thr for cnt in ds.histogram.counts])
    drw = drw_class_weights(ds.histogram).weights if config.drw_epoch is not None else None
    opt = SGD(momentum=config.momentum, weight_decay=config.weight_decay)
    use_mixup = config.variant is MixVariant.MIXUP_Q

    def prep(epoch: int, perm: np.ndarray, mix_on: bool, bi: int):
        stream = substream(seed, _BATCH, epoch, bi)
        base_idx = perm[bi * bs:(bi + 1) * bs]
        size = len(base_idx)
        if not mix_on:
            return images[base_idx], labels[base_idx], labels[base_idx], 1.0
        if pair is None:
            idx = draw_indices(balanced, stream, size)
            x = images[idx].copy()
            y = labels[idx]
            for i in range(size):
                if minority[y[i]]:
                    if config.variant is MixVariant.BLUR_OVERSAMPLE:
                        x[i] = random_blur(x[i], stream, config.blur_kernel_sizes, config.blur_sigma)
                    else:
                        x[i] = random_jitter(x[i], stream, config.jitter_brightness, config.jitter_hue)
            return x, y, y, 1.0
        bg_dist, fg_dist = pair
        bg_idx = base_idx if bg_dist is original else draw_indices(bg_dist, stream, size)
        fg_idx = draw_indices(fg_dist, stream, size)
        x_b, y_b = images[bg_idx], labels[bg_idx]
        x_f, y_f = images[fg_idx], labels[fg_idx]
        if config.per_image_regions:
            x = x_b.copy()
            lam = np.empty(size)
            for i in range(size):
                lam_raw = draw_lambda(config.alpha, stream)
                if use_mixup:
                    x[i] = mixup(x_b[i], x_f[i], lam_raw)
                    lam[i] = lam_raw
                else:
                    region = sample_region(w, h, lam_raw, stream)
                    x[i] = cutmix(x_b[i], x_f[i], region)
                    lam[i] = region.lambda_adj
            return x, y_b, y_f, lam
        lam_raw = draw_lambda(config.alpha, stream)
        if use_mixup:
            return mixup(x_b, x_f, lam_raw), y_b, y_f, lam_raw
        region = sample_region(w, h, lam_raw, stream)
        return cutmix(x_b, x_f, region), y_b, y_f, region.lambda_adj

    history = TrainHistory()
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for epoch in range(config.epochs):
            lr = lr_at(epoch, config)
            mix_on = epoch < config.epochs - config.cmo_off_last
            cw = drw if (config.drw_epoch is not None and epoch >= config.drw_epoch) else None
            perm = substream(seed, _PERM, epoch).permutation(n)
            if pool is not None:
                batches = pool.map(lambda bi: prep(epoch, perm, mix_on, bi), range(n_batches))
            else:
                batches = (prep(epoch, perm, mix_on, bi) for bi in range(n_batches))
            loss_sum = 0.0
            for bi, (x, y_b, y_f, lam) in enumerate(batches):
                try:
                    logits = model.forward(x)
                    loss, dlogits = soft_cross_entropy(logits, y_b, y_f, lam, class_weights=cw)
                except FloatingPointError as e:
                    raise TrainingError(f"epoch {epoch}, batch {bi}: {e}") from e
                if not np.isfinite(loss):
                    raise TrainingError(f"non-finite loss at epoch {epoch}, batch {bi}")
                grads = model.backward(dlogits)
                opt.step(model, grads, lr)
                loss_sum += loss * len(x)
            stats = EpochStats(epoch=epoch, lr=lr, loss=loss_sum / n)
            if test is not None:
                stats.test_acc = _plain_accuracy(model, test)
            history.records.append(stats)
    finally:
        if pool is not None:
            pool.shutdown()
    return model, history


def plain_ce_config(config: TrainConfig) -> TrainConfig:
    """The same schedule with mixing disabled for every epoch."""
    return replace(config, cmo_off_last=config.epochs)


def shot_partition(config: TrainConfig, train_ds: Dataset):
    """Many/medium/few class sets from the training histogram and config thresholds."""
    many, few = resolve_thresholds(config, train_ds)
    return shot_groups(train_ds.histogram, many, few)
