#!/usr/bin/env python3
"""Precompute the user-count/distance lookup table and save it as JSON.

The table is what the table-driven variant consults at runtime instead
of measuring the live topology; building it is the expensive offline
step, so it lives in a script.

Usage: python3 scripts/build_uc_table.py [--out uc_table.json]
           [--n 2,8,16,24,32,48] [--topologies 500] [--config overrides.yaml]
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from coopwlan.coding import default_cache
from coopwlan.config import SimConfig, load_config
from coopwlan.harness import N_GRID
from coopwlan.rate_adapt import build_uc_table


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="uc_table.json")
    ap.add_argument("--n", help="comma list of station counts")
    ap.add_argument("--topologies", type=int)
    ap.add_argument("--config")
    args = ap.parse_args()

    config = load_config(args.config) if args.config else SimConfig()
    n_grid = tuple(int(n) for n in args.n.split(",")) if args.n else N_GRID
    topologies = args.topologies or config.uc_topologies_per_cell
    t0 = time.time()
    table = build_uc_table(
        config.budget,
        config.adapt,
        n_grid=n_grid,
        topologies_per_cell=topologies,
        seed=0,
        cache=default_cache(),
    )
    table.save(args.out)
    print(f"{len(table.entries)} cells -> {args.out}  ({time.time() - t0:.0f}s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
