"""Fast invariant battery behind the `selfcheck` CLI command.

A trimmed-down version of the test suite's core numeric checks, runnable from
an installed package in a few seconds.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np

from . import datasets, metrics, mixing, models, samplers, synth, training


def _check_formulas():
    hist = datasets.ClassHistogram((100, 10, 1))
    q1 = samplers.weighted_distribution(hist, samplers.WeightStrategy.power(1.0))
    expect = np.array([0.01, 0.1, 1.0])
    expect /= expect.sum()
    assert np.abs(q1.class_probs - expect).max() <= 1e-9
    assert abs(samplers.effective_number(1, 50) - 1.0) <= 1e-12
    beta = 110 / 111
    assert abs(samplers.effective_number(100, 111) - (1 - beta**100) / (1 - beta)) <= 1e-9
    region = mixing.region_at(16, 16, 32, 32, 0.75)
    assert region.area == 256 and abs(region.lambda_adj - 0.75) <= 1e-12
    soft = mixing.mix_labels(2, 5, 0.7, 10)
    assert abs(soft.probs[2] - 0.7) <= 1e-12 and abs(soft.probs[5] - 0.3) <= 1e-12
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(8, 5))
    y_b = rng.integers(5, size=8)
    y_f = rng.integers(5, size=8)
    loss, _ = training.soft_cross_entropy(logits, y_b, y_f, 0.7)
    logp = logits - logits.max(axis=1, keepdims=True)
    logp = logp - np.log(np.exp(logp).sum(axis=1, keepdims=True))
    mixed = np.zeros((8, 5))
    mixed[np.arange(8), y_b] += 0.7
    mixed[np.arange(8), y_f] += 0.3
    assert abs(loss - float(-(mixed * logp).sum(axis=1).mean())) <= 1e-10


def _check_regions():
    rng = np.random.default_rng(1)
    for _ in range(2000):
        lam = mixing.draw_lambda(1.0, rng)
        region = mixing.sample_region(32, 32, lam, rng)
        assert region.lambda_adj >= region.lambda_raw - 1e-12


def _check_sampler_convergence():
    hist = datasets.ClassHistogram((100, 10, 1))
    dist = samplers.weighted_distribution(hist, samplers.WeightStrategy.power(1.0))
    rng = np.random.default_rng(7)
    labels = np.repeat(np.arange(3), hist.counts)
    idx = samplers.draw_indices(dist, rng, 30000)
    freq = np.bincount(labels[idx], minlength=3) / 30000
    assert np.abs(freq - dist.class_probs).max() <= 0.02


def _check_gradients():
    rng = np.random.default_rng(3)
    model = models.build_model("linear", (4, 4, 1), 3, rng)
    x = rng.uniform(size=(5, 4, 4, 1))
    y_b = rng.integers(3, size=5)
    y_f = rng.integers(3, size=5)

    def loss_fn():
        logits = model.forward(x)
        return training.soft_cross_entropy(logits, y_b, y_f, 0.6)

    loss, dlogits = loss_fn()
    grads = model.backward(dlogits)
    w = model.params["head_w"]
    h = 1e-6
    for pos in [(0, 0), (3, 2), (7, 1)]:
        w[pos] += h
        up, _ = loss_fn()
        w[pos] -= 2 * h
        down, _ = loss_fn()
        w[pos] += h
        numeric = (up - down) / (2 * h)
        assert abs(numeric - grads["head_w"][pos]) <= 1e-4 * max(1.0, abs(numeric))


def _check_storage_roundtrip():
    rng = np.random.default_rng(11)
    hist = datasets.build_longtail_profile(datasets.LongTailSpec(4, 10, 5.0))
    spec = synth.ContextShiftSpec(num_classes=4, backgrounds=3, tail_exposure=1,
                                  image_side=16, test_per_class=2)
    train_ds, _ = synth.synth_context_shift(spec, hist, rng)
    with tempfile.TemporaryDirectory() as tmp:
        path = datasets.save_dataset(train_ds, Path(tmp) / "d.cmo")
        back = datasets.load_dataset(path)
    assert np.array_equal(back.images, train_ds.images)
    assert np.array_equal(back.labels, train_ds.labels)


def _check_train_determinism():
    rng = np.random.default_rng(5)
    images = rng.uniform(size=(40, 8, 8, 1))
    labels = np.tile(np.arange(4), 10)
    ds = datasets.Dataset.from_arrays(datasets.quantize_pixels(images), labels, 4)
    cfg = training.TrainConfig(epochs=3, batch_size=8, base_lr=0.05, arch="linear",
                               cmo_off_last=1, weight_decay=0.0, seed=9)
    m1, _ = training.train(cfg, ds, workers=1)
    m2, _ = training.train(cfg, ds, workers=2)
    assert m1.param_bytes() == m2.param_bytes()


def _check_calibration():
    probs = np.zeros((10, 4))
    probs[:, 1] = 0.8
    probs[:, 0] = 0.2
    labels = np.array([1] * 8 + [0] * 2)
    conf, ece = metrics.calibration(probs, labels, bins=10)
    assert abs(conf - 0.8) <= 1e-12 and abs(ece - 0.0) <= 1e-12


CHECKS = [
    ("formula suite", _check_formulas),
    ("region arithmetic", _check_regions),
    ("sampler convergence", _check_sampler_convergence),
    ("gradients", _check_gradients),
    ("dataset storage round-trip", _check_storage_roundtrip),
    ("training determinism", _check_train_determinism),
    ("calibration", _check_calibration),
]


def run_selfcheck(log=print) -> bool:
    ok = True
    for name, fn in CHECKS:
        try:
            fn()
            log(f"[selfcheck] {name}: ok")
        except Exception as e:  # noqa: BLE001 - report every failed check
            ok = False
            log(f"[selfcheck] {name}: FAILED ({type(e).__name__}: {e})")
    return ok
