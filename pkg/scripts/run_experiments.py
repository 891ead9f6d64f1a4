#!/usr/bin/env python3
"""Run the full experiment set and write one result file per experiment.

Each experiment lands in OUTDIR/<experiment>.<format>.  Expect a long
wall-clock time at the full defaults (hours on one core); trim with
--experiments, --seeds, or --duration for a quicker look.

Usage: python3 scripts/run_experiments.py [--out results] [--format csv]
           [--config overrides.yaml] [--experiments a,b,...]
           [--seeds 0,1,2] [--duration 10]
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from coopwlan.config import SimConfig, load_config
from coopwlan.harness import EXPERIMENTS, ExperimentSpec, emit_results, run_experiment


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results")
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    ap.add_argument("--config")
    ap.add_argument("--experiments", help="comma list (default: all)")
    ap.add_argument("--seeds", help="comma list of seeds")
    ap.add_argument("--duration", type=float, help="seconds per run")
    args = ap.parse_args()

    config = load_config(args.config) if args.config else SimConfig()
    wanted = tuple(args.experiments.split(",")) if args.experiments else EXPERIMENTS
    kwargs = {}
    if args.seeds:
        kwargs["seeds"] = tuple(int(s) for s in args.seeds.split(","))
    if args.duration:
        kwargs["duration_s"] = args.duration

    outdir = Path(args.out)
    for experiment in wanted:
        t0 = time.time()
        rows = run_experiment(ExperimentSpec(experiment, **kwargs), config)
        path = emit_results(rows, outdir / f"{experiment}.{args.format}", args.format)
        print(f"{experiment}: {len(rows)} rows -> {path}  ({time.time() - t0:.0f}s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
