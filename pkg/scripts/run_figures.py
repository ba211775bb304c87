#!/usr/bin/env python3
"""Run the bundled reproduction configs and collect their artifacts.

Usage:
    python scripts/run_figures.py [--only fig3a fig5 ...] [--out DIR]

Each config writes CSV data plus resolved_config.json / run_metadata.json
into <out>/<config-name>/.  See figures/*.json for the experiment settings.
"""

import argparse
import sys
import time
from pathlib import Path

from nlspec.config import load_config
from nlspec.runner import run_experiment

FIGURE_DIR = Path(__file__).resolve().parent.parent / "figures"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--only", nargs="*", default=None, help="config names to run")
    parser.add_argument("--out", default="out", help="output root directory")
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()

    names = sorted(p.stem for p in FIGURE_DIR.glob("*.json"))
    if args.only:
        missing = set(args.only) - set(names)
        if missing:
            print(f"unknown configs: {sorted(missing)}", file=sys.stderr)
            return 2
        names = args.only
    for name in names:
        config = load_config(FIGURE_DIR / f"{name}.json")
        started = time.perf_counter()
        result = run_experiment(
            config, output_dir=Path(args.out) / name, threads=args.threads
        )
        print(f"{name}: {len(result.files)} files in {time.perf_counter() - started:.1f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
