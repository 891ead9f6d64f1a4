"""Named experiments over the cooperative-MAC simulator.

Each experiment draws topologies (or random-waypoint walks), runs the
per-station rate adaptation, feeds the result to the contention engine
for every requested scheme, and folds the per-seed outcomes into result
rows carrying 90% confidence intervals.

Determinism is load-bearing: every random draw is addressed by
``substream(seed, purpose, cell...)``, so the same spec and seed list
reproduce the same rows whether runs execute sequentially or on worker
processes, and whether a run is served fresh or from the in-process memo.
Schemes deliberately share the topology, walk, and MAC streams (common
random numbers), which tightens the paired comparisons the experiments
exist to make.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .coding import default_cache
from .config import SimConfig
from .macsim import MacMetrics, MacSimulation, interference_probe
from .mobility import MobileEnsemble, init_positions
from .rate_adapt import (
    TxParams,
    UcTable,
    build_uc_table,
    optimize_coop,
    optimize_direct,
    optimize_dstc_greedy,
    optimize_sticmac_cs,
    optimize_sticmac_uc,
)
from .seeds import substream

__all__ = [
    "EXPERIMENTS",
    "SCHEMES",
    "N_GRID",
    "DISTANCE_GRID_M",
    "ExperimentSpec",
    "ResultRow",
    "run_experiment",
    "emit_results",
    "uc_table_for",
    "clear_caches",
]

EXPERIMENTS = (
    "throughput_vs_distance",
    "aggregate_static",
    "aggregate_mobile",
    "delay_static",
    "delay_mobile",
    "interference",
    "no_rts_static",
    "no_rts_mobile",
)

SCHEMES = ("direct", "coopmac", "dstc", "sticmac_cs", "sticmac_uc")

N_GRID = (2, 8, 16, 24, 32, 48)
DISTANCE_GRID_M = (10.0, 20.0, 40.0, 60.0, 80.0, 100.0)

# Experiments that sweep something other than the full station grid.
_DEFAULT_N = {
    "throughput_vs_distance": (48,),
    "interference": (24,),
}


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run: experiment id, schemes, sweep values, seeds, access mode."""

    experiment: str
    schemes: tuple[str, ...] = SCHEMES
    n_values: tuple[int, ...] = ()
    duration_s: float = 10.0
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    mode: str = "auto"
    distances_m: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        schemes = tuple(dict.fromkeys(self.schemes))
        if not schemes:
            raise ValueError("need at least one scheme")
        for s in schemes:
            if s not in SCHEMES:
                raise ValueError(f"unknown scheme {s!r}")
        object.__setattr__(self, "schemes", schemes)
        n_values = tuple(int(n) for n in self.n_values)
        if not n_values:
            n_values = _DEFAULT_N.get(self.experiment, N_GRID)
        if any(n < 1 for n in n_values):
            raise ValueError("station counts must be positive")
        object.__setattr__(self, "n_values", n_values)
        if self.duration_s <= 0.0:
            raise ValueError("duration_s must be positive")
        seeds = tuple(int(s) for s in self.seeds)
        if len(seeds) < 3:
            raise ValueError("need at least 3 seeds for confidence intervals")
        if len(set(seeds)) != len(seeds):
            raise ValueError("seeds must be distinct")
        object.__setattr__(self, "seeds", seeds)
        if self.mode not in ("auto", "rts_on", "rts_off"):
            raise ValueError(f"unknown access mode {self.mode!r}")
        if self.experiment.startswith("no_rts") and self.mode == "rts_on":
            raise ValueError("the no-RTS experiments run with mode rts_off")
        distances = tuple(float(d) for d in self.distances_m)
        if not distances:
            distances = DISTANCE_GRID_M
        if any(d <= 0.0 for d in distances):
            raise ValueError("distances must be positive")
        object.__setattr__(self, "distances_m", distances)

    @property
    def resolved_mode(self) -> str:
        if self.mode != "auto":
            return self.mode
        return "rts_off" if self.experiment.startswith("no_rts") else "rts_on"

    @property
    def mobile(self) -> bool:
        return self.experiment.endswith("_mobile") or self.experiment == "interference"


@dataclass(frozen=True)
class ResultRow:
    """One aggregated point: mean over seeds plus a 90% half-width."""

    experiment: str
    scheme: str
    n: int
    x: float
    value: float
    ci: float
    seeds: int


# ---------------------------------------------------------------------------
# Memoized building blocks.  Keys always start with the config fingerprint,
# so two configs never share a topology, a parameter set, or a run.

_TOPO_MEMO: dict[tuple, object] = {}
_BUNDLE_MEMO: dict[tuple, dict[str, list[TxParams]]] = {}
_UC_MEMO: dict[tuple, UcTable] = {}
_RUN_MEMO: dict[tuple, MacMetrics] = {}


def clear_caches() -> None:
    """Drop all memoized topologies, parameters, tables, and runs."""
    for memo in (_TOPO_MEMO, _BUNDLE_MEMO, _UC_MEMO, _RUN_MEMO):
        memo.clear()


def _fp(config: SimConfig) -> str:
    return repr(config)


def uc_table_for(config: SimConfig, n: int) -> UcTable:
    """The position-averaged lookup table for an n-station cell (memoized)."""
    key = (_fp(config), int(n))
    if key not in _UC_MEMO:
        _UC_MEMO[key] = build_uc_table(
            config.budget,
            config.adapt,
            n_grid=(int(n),),
            topologies_per_cell=config.uc_topologies_per_cell,
            seed=0,
            cache=default_cache(),
        )
    return _UC_MEMO[key]


def _epoch_slices(duration_s: float, epoch_s: float) -> list[float]:
    out = []
    t = 0.0
    while t < duration_s - 1e-12:
        dt = min(epoch_s, duration_s - t)
        out.append(dt)
        t += dt
    return out


def _walk_frames(config: SimConfig, n: int, seed: int, duration_s: float):
    """Positions at the start of each adaptation epoch of one walk."""
    key = (_fp(config), n, seed, float(duration_s), "walk")
    if key not in _TOPO_MEMO:
        ens = MobileEnsemble(n, config.mobility, seed=substream(seed, "walk", n))
        frames = []
        for dt in _epoch_slices(duration_s, config.epoch_s):
            frames.append(ens.positions)
            ens.advance(dt)
        _TOPO_MEMO[key] = frames
    return _TOPO_MEMO[key]


def _static_positions(config: SimConfig, n: int, seed: int, tagged_mm: int) -> np.ndarray:
    """A uniform-disk draw; tagged_mm >= 0 pins station 0 at that distance.

    The untagged rows come from a stream keyed without the tag, so a
    distance sweep moves only the observed station while the crowd stays
    put from one distance to the next.
    """
    key = (_fp(config), n, seed, tagged_mm, "static")
    if key not in _TOPO_MEMO:
        radius = config.budget.cell_radius_m
        rng = substream(seed, "topology", n)
        if tagged_mm < 0:
            pos = init_positions(n, radius, rng)
        else:
            rest = init_positions(n - 1, radius, rng) if n > 1 else np.zeros((0, 2))
            pos = np.vstack([np.array([[tagged_mm / 1000.0, 0.0]]), rest])
        _TOPO_MEMO[key] = pos
    return _TOPO_MEMO[key]


def _params_for(
    config: SimConfig,
    positions: np.ndarray,
    scheme: str,
    *,
    seed: int,
    epoch: int,
    tagged_mm: int,
    uc_table: UcTable | None,
) -> list[TxParams]:
    """Per-station transmit parameters for one scheme on one topology.

    Bundles are memoized per topology content and filled lazily per
    scheme, so e.g. an RTS-off rerun of the same topology pays no
    adaptation cost, while a static draw and a walk frame that share
    (n, seed) can never alias each other's parameters. Every optimizer
    call gets its own addressed stream, which keeps the result
    independent of the order schemes are requested in.
    """
    n = positions.shape[0]
    digest = hashlib.blake2b(
        np.ascontiguousarray(positions).tobytes(), digest_size=8
    ).hexdigest()
    key = (_fp(config), n, seed, epoch, tagged_mm, digest)
    bundle = _BUNDLE_MEMO.setdefault(key, {})
    if scheme not in bundle:
        budget, cfg, cache = config.budget, config.adapt, default_cache()
        out = []
        for i in range(n):
            rng = substream(seed, "adapt", n, epoch, tagged_mm, i, scheme)
            if scheme == "direct":
                p = optimize_direct(positions[i], budget, cfg, seed=rng, cache=cache)
            elif scheme == "coopmac":
                p = optimize_coop(i, budget, cfg, positions=positions, seed=rng, cache=cache)
            elif scheme == "dstc":
                p = optimize_dstc_greedy(i, budget, cfg, positions=positions, seed=rng, cache=cache)
            elif scheme == "sticmac_cs":
                p = optimize_sticmac_cs(i, budget, cfg, positions=positions, seed=rng, cache=cache)
            elif scheme == "sticmac_uc":
                if uc_table is None:
                    raise ValueError("sticmac_uc needs a pre-built table")
                d = float(np.hypot(positions[i, 0], positions[i, 1]))
                p = optimize_sticmac_uc(n, d, budget, cfg, table=uc_table)
            else:
                raise ValueError(f"unknown scheme {scheme!r}")
            out.append(p)
        bundle[scheme] = out
    return bundle[scheme]


# ---------------------------------------------------------------------------
# Cells and runs


@dataclass(frozen=True)
class _Cell:
    """One simulated (station count, seed) point of an experiment sweep."""

    n: int
    seed: int
    mobile: bool
    mode: str
    traffic: tuple
    duration_s: float
    tagged_mm: int


def _traffic_arg(cell: _Cell):
    return "saturated" if cell.traffic[0] == "sat" else cell.traffic[1]


def _run_key(config: SimConfig, cell: _Cell, scheme: str) -> tuple:
    return (_fp(config), cell, scheme)


def _cell_runs(config: SimConfig, cell: _Cell, schemes, uc_table) -> list:
    """Run (or fetch) every requested scheme on one cell."""
    out = []
    for scheme in schemes:
        key = _run_key(config, cell, scheme)
        if key not in _RUN_MEMO:
            sim = MacSimulation(
                mode=cell.mode,
                traffic=_traffic_arg(cell),
                budget=config.budget,
                timings=config.timings,
                seed=substream(cell.seed, "macrun", cell.n, cell.tagged_mm, int(cell.mobile), cell.mode),
                cache=default_cache(),
                pdu_bytes=config.pdu_bytes,
            )
            if cell.mobile:
                frames = _walk_frames(config, cell.n, cell.seed, cell.duration_s)
                metrics = None
                for epoch, (dt, pos) in enumerate(
                    zip(_epoch_slices(cell.duration_s, config.epoch_s), frames)
                ):
                    params = _params_for(
                        config, pos, scheme,
                        seed=cell.seed, epoch=epoch, tagged_mm=cell.tagged_mm,
                        uc_table=uc_table,
                    )
                    sim.configure(pos, params)
                    metrics = sim.run(dt)
            else:
                pos = _static_positions(config, cell.n, cell.seed, cell.tagged_mm)
                params = _params_for(
                    config, pos, scheme,
                    seed=cell.seed, epoch=0, tagged_mm=cell.tagged_mm,
                    uc_table=uc_table,
                )
                sim.configure(pos, params)
                metrics = sim.run(cell.duration_s)
            _RUN_MEMO[key] = metrics
        out.append((key, _RUN_MEMO[key]))
    return out


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("COOPWLAN_WORKERS", "1")))
    except ValueError:
        return 1


def _ensure_runs(config: SimConfig, cells, schemes) -> None:
    """Fill the run memo for every (cell, scheme), possibly on workers.

    Tables are built in the parent and shipped to workers; results are
    folded back in submission order, so the memo contents do not depend
    on completion order.
    """
    tables: dict[int, UcTable | None] = {}
    for cell in cells:
        if cell.n not in tables:
            tables[cell.n] = uc_table_for(config, cell.n) if "sticmac_uc" in schemes else None
    missing = [
        c for c in cells
        if any(_run_key(config, c, s) not in _RUN_MEMO for s in schemes)
    ]
    workers = _worker_count()
    if workers > 1 and len(missing) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_cell_runs, config, c, tuple(schemes), tables[c.n])
                for c in missing
            ]
            for fut in futures:
                for key, metrics in fut.result():
                    _RUN_MEMO.setdefault(key, metrics)
    else:
        for c in missing:
            _cell_runs(config, c, schemes, tables[c.n])


def _t90_halfwidth(values: np.ndarray) -> float:
    k = values.size
    if k < 2 or not np.isfinite(values).all():
        return float("nan")
    return float(stats.t.ppf(0.95, k - 1) * values.std(ddof=1) / math.sqrt(k))


def _metrics_at(config: SimConfig, cell: _Cell, scheme: str) -> MacMetrics:
    return _RUN_MEMO[_run_key(config, cell, scheme)]


# ---------------------------------------------------------------------------
# The experiments


def run_experiment(spec: ExperimentSpec, config: SimConfig | None = None) -> list[ResultRow]:
    """Execute one named experiment and return its aggregated rows.

    Row order is the deterministic sweep order (scheme, then station
    count, then x); values are means over the seed list with 90%
    t-interval half-widths across seeds.
    """
    config = config or SimConfig()
    exp = spec.experiment
    mode = spec.resolved_mode
    k = len(spec.seeds)
    traffic = ("cbr", float(config.matched_load_bps)) if exp == "interference" else ("sat",)

    if exp == "throughput_vs_distance":
        cells = {
            (n, d, seed): _Cell(n, seed, False, mode, traffic, spec.duration_s, int(round(d * 1000)))
            for n in spec.n_values
            for d in spec.distances_m
            for seed in spec.seeds
        }
        _ensure_runs(config, list(cells.values()), spec.schemes)
        rows = []
        for scheme in spec.schemes:
            for n in spec.n_values:
                for d in spec.distances_m:
                    vals = np.array([
                        float(_metrics_at(config, cells[(n, d, seed)], scheme).per_station_throughput_mbps()[0])
                        for seed in spec.seeds
                    ])
                    rows.append(ResultRow(exp, scheme, n, float(d), float(vals.mean()), _t90_halfwidth(vals), k))
        return rows

    if exp == "interference":
        n = spec.n_values[0]
        cells = {seed: _Cell(n, seed, True, mode, traffic, spec.duration_s, -1) for seed in spec.seeds}
        _ensure_runs(config, list(cells.values()), spec.schemes)
        distances = config.probe_distances_m
        rows = []
        for scheme in spec.schemes:
            probe = np.array([
                interference_probe(_metrics_at(config, cells[seed], scheme), distances, budget=config.budget)
                for seed in spec.seeds
            ])
            for j, d in enumerate(distances):
                vals = probe[:, j]
                rows.append(ResultRow(exp, scheme, n, float(d), float(vals.mean()), _t90_halfwidth(vals), k))
        return rows

    # Station-count sweeps: aggregate throughput, mean delay, and their
    # RTS-off twins.
    delay = exp.startswith("delay")
    cells = {
        (n, seed): _Cell(n, seed, spec.mobile, mode, traffic, spec.duration_s, -1)
        for n in spec.n_values
        for seed in spec.seeds
    }
    _ensure_runs(config, list(cells.values()), spec.schemes)
    rows = []
    for scheme in spec.schemes:
        for n in spec.n_values:
            picked = [_metrics_at(config, cells[(n, seed)], scheme) for seed in spec.seeds]
            vals = np.array([
                m.mean_delay_ms() if delay else m.throughput_mbps() for m in picked
            ])
            rows.append(ResultRow(exp, scheme, n, float(n), float(vals.mean()), _t90_halfwidth(vals), k))
    return rows


# ---------------------------------------------------------------------------
# Output


_CSV_HEADER = "experiment,scheme,N,x,value,ci,seeds"


def _json_number(v: float):
    return float(v) if math.isfinite(v) else None


def _row_dict(row: ResultRow) -> dict:
    return {
        "experiment": row.experiment,
        "scheme": row.scheme,
        "N": int(row.n),
        "x": float(row.x),
        "value": _json_number(row.value),
        "ci": _json_number(row.ci),
        "seeds": int(row.seeds),
    }


def _validate_payload(payload: list[dict]) -> None:
    try:
        import jsonschema
    except ImportError:  # validation is a test/CI concern, not a hard dep
        return
    schema = json.loads((Path(__file__).parent / "results_schema.json").read_text())
    jsonschema.validate(payload, schema)


def emit_results(rows, path, fmt: str = "csv") -> Path:
    """Write one experiment's rows to one file, byte-stable across reruns."""
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to write")
    if len({r.experiment for r in rows}) != 1:
        raise ValueError("one output file holds exactly one experiment")
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        lines = [_CSV_HEADER]
        for r in rows:
            lines.append(",".join([
                r.experiment,
                r.scheme,
                str(int(r.n)),
                repr(float(r.x)),
                repr(float(r.value)),
                repr(float(r.ci)),
                str(int(r.seeds)),
            ]))
        path.write_text("\n".join(lines) + "\n")
    else:
        payload = [_row_dict(r) for r in rows]
        _validate_payload(payload)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path
