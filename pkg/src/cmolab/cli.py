"""Command line entry point.

Exit codes: 0 success, 1 configuration error, 2 any failed grid cell or
failed selfcheck.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiment import ConfigError, load_manifest, make_data, parse_config, report, run
from .selfcheck import run_selfcheck


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmolab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a (method x seed) experiment grid")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--out", type=Path, default=None, help="output directory (overrides config)")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel cell processes")
    p_run.add_argument("--resume", action="store_true", help="skip cells already in the manifest")

    p_rep = sub.add_parser("report", help="render per-method tables from a manifest")
    p_rep.add_argument("manifest", type=Path)
    p_rep.add_argument("--format", choices=("csv", "txt"), default="txt")

    p_data = sub.add_parser("make-data", help="build and store the configured dataset")
    p_data.add_argument("config", type=Path)
    p_data.add_argument("--out", type=Path, default=None)

    sub.add_parser("selfcheck", help="run the built-in invariant suite")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        try:
            config = parse_config(args.config)
            manifest = run(config, out_dir=args.out, jobs=args.jobs, resume=args.resume)
        except ConfigError as e:
            print(f"config error: {e}", file=sys.stderr)
            return 1
        failures = [r for r in manifest.records if r["status"] != "ok"]
        if failures:
            for r in failures:
                first_line = (r["error"] or "").splitlines()[0] if r["error"] else "unknown"
                print(f"cell {r['method']}/seed{r['seed']} failed: {first_line}", file=sys.stderr)
            return 2
        print(report(manifest, fmt="txt"), end="")
        return 0
    if args.command == "report":
        try:
            manifest = load_manifest(args.manifest)
        except (OSError, ValueError, KeyError) as e:
            print(f"config error: cannot load manifest: {e}", file=sys.stderr)
            return 1
        print(report(manifest, fmt=args.format), end="")
        return 0
    if args.command == "make-data":
        try:
            config = parse_config(args.config)
            out = args.out if args.out is not None else Path(config.out_dir)
            train_path, test_path, digest = make_data(config, Path(out))
        except ConfigError as e:
            print(f"config error: {e}", file=sys.stderr)
            return 1
        print(f"train: {train_path}\ntest: {test_path}\nsha1: {digest}")
        return 0
    if args.command == "selfcheck":
        return 0 if run_selfcheck() else 2
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
