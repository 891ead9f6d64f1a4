"""Command-line front end: run experiments, build tables, self-check, trace.

Exit codes: 0 on success, 2 when inputs fail validation (bad flags,
malformed config, out-of-range values), 3 when a run fails underway.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .coding import default_cache
from .config import SimConfig, load_config
from .harness import (
    DISTANCE_GRID_M,
    EXPERIMENTS,
    N_GRID,
    SCHEMES,
    ExperimentSpec,
    emit_results,
    run_experiment,
)
from .macsim import MacSimulation, write_event_trace
from .phy import RATE_TABLE, ser_square_qam
from .rate_adapt import build_uc_table
from .seeds import substream

__all__ = ["main"]


def _parse_int_list(text: str, what: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ValueError(f"{what} must be a comma-separated list of integers") from None


def _parse_float_list(text: str, what: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ValueError(f"{what} must be a comma-separated list of numbers") from None


def _parse_seeds(text: str) -> tuple[int, ...]:
    """Either an explicit comma list ("3,4,5") or a count ("5" -> 0..4)."""
    values = _parse_int_list(text, "--seeds")
    if len(values) == 1:
        return tuple(range(values[0]))
    return values


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="coopwlan",
        description="Cooperative-WLAN simulator: experiments, tables, checks.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a named experiment and write its rows")
    run_p.add_argument("experiment", choices=EXPERIMENTS)
    run_p.add_argument("--config", help="JSON/YAML file overriding the defaults")
    run_p.add_argument("--seeds", help="comma list of seeds, or a bare count")
    run_p.add_argument("--out", help="output file (default results/<experiment>.<format>)")
    run_p.add_argument("--format", choices=("csv", "json"), default="csv")
    run_p.add_argument("--mode", choices=("rts_on", "rts_off"))
    run_p.add_argument("--schemes", help=f"comma list from {', '.join(SCHEMES)}")
    run_p.add_argument("--n", help="comma list of station counts")
    run_p.add_argument("--duration", type=float, help="seconds of simulated time per run")
    run_p.add_argument("--distances", help="comma list of metres (distance sweep only)")

    uc_p = sub.add_parser("build-uc-table", help="precompute the position-averaged table")
    uc_p.add_argument("--config")
    uc_p.add_argument("--out", default="uc_table.json")
    uc_p.add_argument("--n", help=f"comma list of station counts (default {','.join(map(str, N_GRID))})")
    uc_p.add_argument("--topologies", type=int, help="Monte-Carlo topologies per cell")

    val_p = sub.add_parser("validate-phy", help="self-check error rates against Monte Carlo")
    val_p.add_argument("--symbols", type=int, default=200_000)

    tr_p = sub.add_parser("trace", help="write the event log of one short run")
    tr_p.add_argument("--config")
    tr_p.add_argument("--scheme", choices=SCHEMES, default="sticmac_cs")
    tr_p.add_argument("--n", type=int, default=8)
    tr_p.add_argument("--duration", type=float, default=0.05)
    tr_p.add_argument("--seed", type=int, default=0)
    tr_p.add_argument("--mode", choices=("rts_on", "rts_off"), default="rts_on")
    tr_p.add_argument("--out", default="trace.csv")
    return p


def _cmd_run(args) -> int:
    config = load_config(args.config) if args.config else SimConfig()
    kwargs: dict = {}
    if args.schemes:
        kwargs["schemes"] = tuple(args.schemes.split(","))
    if args.n:
        kwargs["n_values"] = _parse_int_list(args.n, "--n")
    if args.duration is not None:
        kwargs["duration_s"] = args.duration
    if args.seeds:
        kwargs["seeds"] = _parse_seeds(args.seeds)
    if args.mode:
        kwargs["mode"] = args.mode
    if args.distances:
        kwargs["distances_m"] = _parse_float_list(args.distances, "--distances")
    spec = ExperimentSpec(args.experiment, **kwargs)
    rows = run_experiment(spec, config)
    out = args.out or f"results/{args.experiment}.{args.format}"
    path = emit_results(rows, out, args.format)
    print(f"wrote {len(rows)} rows to {path}")
    return 0


def _cmd_build_uc_table(args) -> int:
    config = load_config(args.config) if args.config else SimConfig()
    n_grid = _parse_int_list(args.n, "--n") if args.n else N_GRID
    topologies = args.topologies or config.uc_topologies_per_cell
    table = build_uc_table(
        config.budget,
        config.adapt,
        n_grid=n_grid,
        topologies_per_cell=topologies,
        seed=0,
        cache=default_cache(),
    )
    table.save(args.out)
    print(f"wrote {len(table.entries)} cells to {args.out}")
    return 0


def _mc_ser(modulation_order: int, snr: float, n_symbols: int, rng) -> tuple[float, float]:
    """Monte-Carlo symbol error rate of M-QAM, with its standard error.

    Square constellations split into two independent PAM axes; BPSK is a
    single real axis.  Unit symbol energy, noise variance 1/(2 snr) per
    real dimension.
    """
    sigma = 1.0 / np.sqrt(2.0 * snr)
    if modulation_order == 2:
        rx = 1.0 + sigma * rng.standard_normal(n_symbols)
        errors = rx < 0.0
    else:
        m_side = int(round(np.sqrt(modulation_order)))
        alpha = np.sqrt(3.0 / (2.0 * (modulation_order - 1)))
        levels = alpha * (2.0 * np.arange(m_side) - (m_side - 1))
        idx = rng.integers(0, m_side, size=(n_symbols, 2))
        rx = levels[idx] + sigma * rng.standard_normal((n_symbols, 2))
        detected = np.clip(np.round((rx / alpha + (m_side - 1)) / 2.0), 0, m_side - 1)
        errors = (detected != idx).any(axis=1)
    p = float(errors.mean())
    se = float(np.sqrt(max(p * (1.0 - p), 1e-12) / n_symbols))
    return p, se


def _cmd_validate_phy(args) -> int:
    by_order = {m.modulation_order: m for m in RATE_TABLE}
    rng = substream(0, "phy-self-check")
    failures = 0
    for order in (2, 4, 16, 64):
        for snr_db in (5.0, 10.0):
            snr = 10.0 ** (snr_db / 10.0)
            closed = float(ser_square_qam(by_order[order], snr))
            mc, se = _mc_ser(order, snr, args.symbols, rng)
            # the additive floor keeps deep-tail points (< a few expected
            # errors) from failing on pure counting noise
            ok = abs(closed - mc) <= 4.0 * se + 5.0 / args.symbols
            status = "PASS" if ok else "FAIL"
            print(f"{status} M={order:2d} snr={snr_db:4.1f}dB closed={closed:.5f} mc={mc:.5f} se={se:.5f}")
            failures += 0 if ok else 1
    cache = default_cache()
    per = cache.lookup_many(RATE_TABLE[0].code_rate, 1500, np.array([1e-3]))
    ok = np.isfinite(per).all() and 0.0 <= float(per[0]) <= 1.0
    print(f"{'PASS' if ok else 'FAIL'} coded-error cache lookup")
    failures += 0 if ok else 1
    if failures:
        raise RuntimeError(f"{failures} self-check(s) failed")
    return 0


def _cmd_trace(args) -> int:
    from .harness import _params_for, _static_positions, uc_table_for

    config = load_config(args.config) if args.config else SimConfig()
    if args.n < 1:
        raise ValueError("--n must be at least 1")
    if args.duration <= 0:
        raise ValueError("--duration must be positive")
    positions = _static_positions(config, args.n, args.seed, -1)
    table = uc_table_for(config, args.n) if args.scheme == "sticmac_uc" else None
    params = _params_for(
        config, positions, args.scheme,
        seed=args.seed, epoch=0, tagged_mm=-1, uc_table=table,
    )
    sim = MacSimulation(
        mode=args.mode,
        budget=config.budget,
        timings=config.timings,
        seed=substream(args.seed, "macrun", args.n, -1, 0, args.mode),
        cache=default_cache(),
        pdu_bytes=config.pdu_bytes,
        trace=True,
    )
    sim.configure(positions, params)
    sim.run(args.duration)
    count = write_event_trace(args.out, sim.events)
    print(f"wrote {count} events to {args.out}")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "build-uc-table": _cmd_build_uc_table,
    "validate-phy": _cmd_validate_phy,
    "trace": _cmd_trace,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure, distinct from bad input
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
