#!/usr/bin/env python3
"""Render a sample grid of the synthetic context-shift images to a PNG.

Needs matplotlib (available in the dev environment, not a package dependency).
"""

import argparse
from pathlib import Path

import numpy as np

from cmolab.datasets import LongTailSpec, build_longtail_profile
from cmolab.synth import ContextShiftSpec, synth_context_shift


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--classes", type=int, default=20)
    ap.add_argument("--n-max", type=int, default=100)
    ap.add_argument("--rho", type=float, default=50.0)
    ap.add_argument("--backgrounds", type=int, default=8)
    ap.add_argument("--exposure", type=int, default=1)
    ap.add_argument("--seed", type=int, default=1234)
    ap.add_argument("--per-class", type=int, default=6, help="samples shown per class")
    ap.add_argument("--split", choices=("train", "test"), default="train")
    ap.add_argument("--out", type=Path, default=Path("dataset_preview.png"))
    args = ap.parse_args()

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    hist = build_longtail_profile(LongTailSpec(args.classes, args.n_max, args.rho))
    spec = ContextShiftSpec(
        num_classes=args.classes, backgrounds=args.backgrounds,
        tail_exposure=args.exposure, test_per_class=max(args.per_class, 2),
    )
    train_ds, test_ds = synth_context_shift(spec, hist, np.random.default_rng(args.seed))
    ds = train_ds if args.split == "train" else test_ds

    rows, cols = args.classes, args.per_class
    fig, axes = plt.subplots(rows, cols, figsize=(cols * 1.2, rows * 1.2))
    for k in range(rows):
        idx = np.flatnonzero(ds.labels == k)[:cols]
        for j in range(cols):
            ax = axes[k][j] if rows > 1 else axes[j]
            ax.axis("off")
            if j < len(idx):
                i = idx[j]
                ax.imshow(ds.images[i])
                ax.set_title(f"c{k} bg{ds.meta[i]['background']}", fontsize=5)
    fig.tight_layout()
    fig.savefig(args.out, dpi=140)
    print(f"wrote {args.out} ({args.split}: {len(ds)} images, counts {hist.counts})")


if __name__ == "__main__":
    main()
