#!/usr/bin/env python3
"""End-to-end experiment: generate data, train, evaluate, sweep, analyze.

Equivalent to chaining the CLI subcommands; handy for one-shot reproduction:

    python3 scripts/run_experiment.py --seed 10 --out runs/seed10
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from ebcbm import cli


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=None)
    ap.add_argument("--seed", type=int, default=10)
    ap.add_argument("--out", default="runs/default")
    args = ap.parse_args()

    base = ["--seed", str(args.seed), "--out", args.out]
    if args.config:
        base += ["--config", args.config]
    ck = ["--checkpoint", str(Path(args.out) / "checkpoint.bin"),
          "--dataset", args.out]

    steps = [
        ["gen-data"] + base,
        ["train"] + base + ["--dataset", args.out],
        ["eval"] + base + ck,
        ["sweep"] + base + ck,
        ["analyze", "energy-histogram", "--concept", "0"] + base + ck,
        ["analyze", "info"] + base + ck,
    ]
    for step in steps:
        print(f"$ ebcbm {' '.join(step)}")
        rc = cli.run(step)
        if rc != 0:
            return rc
    print(f"artifacts under {args.out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
