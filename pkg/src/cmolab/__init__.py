"""Desk-scale laboratory for context-rich minority oversampling on long-tailed data."""

from .datasets import (
    ClassHistogram,
    Dataset,
    DatasetFormatError,
    LabeledImage,
    LongTailSpec,
    ShotGroups,
    build_longtail_profile,
    imbalance_ratio,
    load_dataset,
    save_dataset,
    shot_groups,
    subsample_longtail,
)
from .metrics import MetricsReport, calibration, evaluate
from .mixing import (
    MixRegion,
    MixVariant,
    MixedSample,
    SoftLabel,
    adjusted_lambda,
    color_jitter,
    cutmix,
    draw_lambda,
    gaussian_blur,
    make_pair_sources,
    mix_labels,
    mixup,
    sample_region,
)
from .models import build_model, forward, load_model, save_model
from .samplers import (
    ClassWeights,
    SamplingDistribution,
    WeightStrategy,
    draw_indices,
    draw_instance,
    drw_class_weights,
    effective_number,
    empirical_distribution,
    ros_expand,
    weighted_distribution,
)
from .synth import ContextShiftSpec, synth_context_shift
from .training import SGD, TrainConfig, TrainHistory, lr_at, soft_cross_entropy, train

__version__ = "0.1.0"

__all__ = [
    "SGD",
    "ClassHistogram",
    "ClassWeights",
    "ContextShiftSpec",
    "Dataset",
    "DatasetFormatError",
    "LabeledImage",
    "LongTailSpec",
    "MetricsReport",
    "MixRegion",
    "MixVariant",
    "MixedSample",
    "SamplingDistribution",
    "ShotGroups",
    "SoftLabel",
    "TrainConfig",
    "TrainHistory",
    "WeightStrategy",
    "adjusted_lambda",
    "build_longtail_profile",
    "build_model",
    "calibration",
    "color_jitter",
    "cutmix",
    "draw_indices",
    "draw_instance",
    "draw_lambda",
    "drw_class_weights",
    "effective_number",
    "empirical_distribution",
    "evaluate",
    "forward",
    "gaussian_blur",
    "imbalance_ratio",
    "load_dataset",
    "load_model",
    "lr_at",
    "make_pair_sources",
    "mix_labels",
    "mixup",
    "ros_expand",
    "sample_region",
    "save_dataset",
    "save_model",
    "shot_groups",
    "soft_cross_entropy",
    "subsample_longtail",
    "synth_context_shift",
    "train",
    "weighted_distribution",
]
