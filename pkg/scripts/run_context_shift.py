#!/usr/bin/env python3
"""Run the context-shift benchmark grid and print the comparison table.

Equivalent to `cmolab run configs/context_shift.toml` followed by
`cmolab report <manifest>`; kept as a script so the benchmark is one command.
"""

import argparse
import sys
from pathlib import Path

from cmolab.experiment import parse_config, report, run

REPO = Path(__file__).resolve().parents[1]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path, default=REPO / "configs" / "context_shift.toml")
    ap.add_argument("--out", type=Path, default=None)
    ap.add_argument("--jobs", type=int, default=2)
    ap.add_argument("--resume", action="store_true")
    args = ap.parse_args()

    config = parse_config(args.config)
    manifest = run(config, out_dir=args.out, jobs=args.jobs, resume=args.resume)
    failed = [r for r in manifest.records if r["status"] != "ok"]
    print()
    print(report(manifest, fmt="txt"))
    if failed:
        print(f"{len(failed)} cells failed", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
