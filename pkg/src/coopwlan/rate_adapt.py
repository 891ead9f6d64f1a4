"""Transmission-parameter optimizers for all four schemes.

Each optimizer maximizes the end-to-end data rate subject to a mean
end-to-end PER constraint, estimated by Monte Carlo from average channel
statistics (never instantaneous gains). Feasibility testing is sequential
and conservative: a candidate is accepted only when the estimate plus its
95% half-width clears the threshold, growing the trial count when the
verdict is ambiguous, and rejecting what remains ambiguous at the cap.
All candidates within one optimization share common random draws, so
comparisons between parameter sets are paired rather than independent.

Ties break deterministically: highest end-to-end rate, then smallest
space-time dimension, then highest first-hop rate, then lowest station
id.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .coding import CodedPerCache, PerEstimate, default_cache
from .per_engine import (
    DATA_PDU_BYTES,
    RelaySet,
    per_at_snr,
    sample_coop_per,
    sample_direct_per,
    sample_dstc_per,
    sample_rdstc_per,
)
from .phy import RATE_TABLE, LinkBudget, Mcs, mcs_for_rate, mean_snr, stc_for_dimension
from .seeds import substream

__all__ = [
    "TxParams",
    "AdaptConfig",
    "UcTable",
    "e2e_rate_mbps",
    "direct_params",
    "coop_params",
    "dstc_params",
    "rdstc_params",
    "optimize_direct",
    "optimize_coop",
    "optimize_dstc_greedy",
    "optimize_sticmac_cs",
    "optimize_sticmac_uc",
    "build_uc_table",
    "evaluate_params",
]


def e2e_rate_mbps(scheme: str, r1: Mcs, r2: Mcs | None = None, stc_dimension: int | None = None) -> float:
    """The end-to-end data-rate objective for a parameter choice.

    Two-hop schemes pay both hops; the space-time schemes additionally pay
    the space-time block code's own rate on the second hop.
    """
    if scheme == "direct":
        return r1.rate_mbps
    if scheme == "coopmac":
        return 1.0 / (1.0 / r1.rate_mbps + 1.0 / r2.rate_mbps)
    rc = float(stc_for_dimension(stc_dimension).code_rate)
    return 1.0 / (1.0 / r1.rate_mbps + 1.0 / (rc * r2.rate_mbps))


@dataclass(frozen=True)
class TxParams:
    """A scheme with its chosen rates and relays, plus the objective value.

    `compliant` is False only for the last-resort fallback where even the
    base rate cannot meet the PER target; the MAC still has to send.
    """

    scheme: str
    r1: Mcs
    r2: Mcs | None = None
    stc_dimension: int | None = None
    relay: int | None = None
    relay_set: RelaySet | None = None
    e2e_rate_mbps: float = 0.0
    compliant: bool = True

    def __post_init__(self) -> None:
        if self.scheme == "direct":
            if self.r2 is not None or self.relay is not None or self.relay_set is not None:
                raise ValueError("direct transmission has no second hop")
        elif self.scheme == "coopmac":
            if self.r2 is None or self.relay is None:
                raise ValueError("coopmac needs a second-hop rate and a relay")
        elif self.scheme == "dstc":
            if self.r2 is None or self.relay_set is None:
                raise ValueError("dstc needs a second-hop rate and a relay set")
            if self.stc_dimension != len(self.relay_set):
                raise ValueError("relay set size must equal the space-time dimension")
        elif self.scheme == "rdstc":
            if self.r2 is None or self.stc_dimension is None:
                raise ValueError("rdstc needs a second-hop rate and a dimension")
        else:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        expected = e2e_rate_mbps(self.scheme, self.r1, self.r2, self.stc_dimension)
        if not math.isclose(self.e2e_rate_mbps, expected, rel_tol=1e-9):
            raise ValueError("e2e_rate_mbps inconsistent with the rates")


def direct_params(r: Mcs, compliant: bool = True) -> TxParams:
    return TxParams(
        scheme="direct", r1=r, e2e_rate_mbps=e2e_rate_mbps("direct", r), compliant=compliant
    )


def coop_params(r1: Mcs, r2: Mcs, relay: int, compliant: bool = True) -> TxParams:
    return TxParams(
        scheme="coopmac",
        r1=r1,
        r2=r2,
        relay=relay,
        e2e_rate_mbps=e2e_rate_mbps("coopmac", r1, r2),
        compliant=compliant,
    )


def dstc_params(r1: Mcs, r2: Mcs, relay_set: RelaySet, compliant: bool = True) -> TxParams:
    ell = len(relay_set)
    return TxParams(
        scheme="dstc",
        r1=r1,
        r2=r2,
        stc_dimension=ell,
        relay_set=relay_set,
        e2e_rate_mbps=e2e_rate_mbps("dstc", r1, r2, ell),
        compliant=compliant,
    )


def rdstc_params(r1: Mcs, r2: Mcs, stc_dimension: int, compliant: bool = True) -> TxParams:
    return TxParams(
        scheme="rdstc",
        r1=r1,
        r2=r2,
        stc_dimension=stc_dimension,
        e2e_rate_mbps=e2e_rate_mbps("rdstc", r1, r2, stc_dimension),
        compliant=compliant,
    )


@dataclass(frozen=True)
class AdaptConfig:
    """Knobs of the PER-constrained rate search."""

    gamma: float = 0.05
    rate_set: tuple[float, ...] = tuple(m.rate_mbps for m in RATE_TABLE)
    stc_set: tuple[int, ...] = (2, 3, 4)
    per_trials: int = 600
    max_trials: int = 4800
    pdu_bytes: int = DATA_PDU_BYTES

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma out of (0,1)")
        if not self.rate_set:
            raise ValueError("rate_set is empty")
        known = {m.rate_mbps for m in RATE_TABLE}
        if not set(self.rate_set) <= known:
            raise ValueError(f"rate_set not a subset of {sorted(known)}")
        if not set(self.stc_set) <= {2, 3, 4}:
            raise ValueError("stc_set entries must be 2, 3, or 4")
        if self.per_trials < 2 or self.max_trials < self.per_trials:
            raise ValueError("need max_trials >= per_trials >= 2")


# ---------------------------------------------------------------------------
# Sequential feasibility


def _mean_hw(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = values.shape[0]
    return values.mean(axis=0), 1.96 * values.std(axis=0, ddof=1) / math.sqrt(n)


def _decide(gamma: float, values_at, start: int, cap: int) -> tuple[bool, float, float]:
    """Sequentially test E[value] <= gamma; conservative at the cap."""
    if gamma >= 1.0:
        v = values_at(min(start, cap))
        mean, hw = _mean_hw(v)
        return True, float(mean), float(hw)
    n = min(start, cap)
    while True:
        v = values_at(n)
        mean, hw = _mean_hw(v)
        if mean + hw <= gamma:
            return True, float(mean), float(hw)
        if mean - hw >= gamma or n >= cap:
            return False, float(mean), float(hw)
        n = min(4 * n, cap)


def _decide_vector(gamma: float, matrix_at, start: int, cap: int) -> np.ndarray:
    """Columnwise version of _decide over a (trials, candidates) matrix."""
    n = min(start, cap)
    while True:
        mat = matrix_at(n)
        if gamma >= 1.0:
            return np.ones(mat.shape[1], dtype=bool)
        mean, hw = _mean_hw(mat)
        accept = mean + hw <= gamma
        undecided = (mean - hw < gamma) & ~accept
        if not undecided.any() or n >= cap:
            return accept
        n = min(4 * n, cap)


# ---------------------------------------------------------------------------
# Common-random-number pools over (trial, candidate)


class _RelayPools:
    """Pre-drawn randomness for evaluating many parameter sets, paired.

    `m1`/`m2` are mean first/second-hop SNRs per candidate, either (n,)
    for a fixed topology or (cap, n) when each trial carries its own
    topology (the position-averaged table build).
    """

    def __init__(self, rng, m1, m2, cap, l_max, pdu_bytes, cache):
        self.cap = cap
        self.pdu_bytes = pdu_bytes
        self.cache = cache
        n = np.shape(m2)[-1]
        self.n_candidates = n
        self.exp1 = rng.exponential(1.0, (cap, n)) * m1
        self.u = rng.random((cap, n))
        h = (rng.standard_normal((cap, n)) + 1j * rng.standard_normal((cap, n))) / math.sqrt(2)
        self.h2_power = np.abs(h) ** 2 * m2
        self.h2 = h * np.sqrt(m2)
        if l_max:
            self.w = (
                rng.standard_normal((cap, n, l_max)) + 1j * rng.standard_normal((cap, n, l_max))
            ) / math.sqrt(2)
        else:
            self.w = None
        self._hop1 = {}

    def hop1(self, r1: Mcs) -> np.ndarray:
        key = r1.rate_mbps
        if key not in self._hop1:
            self._hop1[key] = per_at_snr(r1, self.exp1, self.pdu_bytes, self.cache)
        return self._hop1[key]

    def rdstc_values(self, r1: Mcs, r2: Mcs, ell: int, n: int) -> np.ndarray:
        decoded = self.u[:n] >= self.hop1(r1)[:n]
        g = np.einsum("tn,tnl->tl", self.h2[:n] * decoded, self.w[:n, :, :ell]) / math.sqrt(ell)
        snr2 = np.sum(np.abs(g) ** 2, axis=1)
        p2 = per_at_snr(r2, snr2, self.pdu_bytes, self.cache)
        return np.where(decoded.any(axis=1), p2, 1.0)

    def dstc_values(self, r1: Mcs, r2: Mcs, members: Sequence[int], n: int) -> np.ndarray:
        members = list(members)
        decoded = self.u[:n, members] >= self.hop1(r1)[:n, members]
        snr2 = np.sum(self.h2_power[:n, members] * decoded, axis=1)
        p2 = per_at_snr(r2, snr2, self.pdu_bytes, self.cache)
        return np.where(decoded.any(axis=1), p2, 1.0)

    def dstc_addition_values(
        self, r1: Mcs, r2: Mcs, members: Sequence[int], rest: Sequence[int], n: int
    ) -> np.ndarray:
        """(n, len(rest)) matrix: set PER with each remaining candidate added."""
        members, rest = list(members), list(rest)
        p1 = self.hop1(r1)
        dec_base = self.u[:n, members] >= p1[:n, members]
        snr_base = np.sum(self.h2_power[:n, members] * dec_base, axis=1)
        any_base = dec_base.any(axis=1)
        dec_rest = self.u[:n, rest] >= p1[:n, rest]
        snr = snr_base[:, None] + self.h2_power[:n, rest] * dec_rest
        p2 = per_at_snr(r2, snr.ravel(), self.pdu_bytes, self.cache).reshape(snr.shape)
        return np.where(any_base[:, None] | dec_rest, p2, 1.0)


def _sorted_pairs(cfg: AdaptConfig, scheme: str, ell: int | None = None):
    """All (objective, r1, r2) rate pairs, best objective first."""
    rates = [mcs_for_rate(r) for r in sorted(cfg.rate_set)]
    combos = [
        (e2e_rate_mbps(scheme, r1, r2, ell), r1, r2) for r1 in rates for r2 in rates
    ]
    combos.sort(key=lambda c: (-c[0], -c[1].rate_mbps))
    return combos


def _distances(positions: np.ndarray, source: int, candidates: Sequence[int]):
    pos = np.asarray(positions, dtype=float)
    cand = pos[list(candidates)]
    d1 = np.hypot(*(cand - pos[source]).T)
    d2 = np.hypot(*cand.T)
    return d1, d2


# ---------------------------------------------------------------------------
# Optimizers


def optimize_direct(
    source,
    budget: LinkBudget | None = None,
    cfg: AdaptConfig | None = None,
    seed=0,
    cache: CodedPerCache | None = None,
) -> TxParams:
    """Highest rate whose fading-averaged PER meets the target.

    `source` is the station's position (or scalar distance to the access
    point). Falls back to the base rate, flagged non-compliant, when no
    rate qualifies.
    """
    budget = budget or LinkBudget()
    cfg = cfg or AdaptConfig()
    cache = cache if cache is not None else default_cache()
    p = np.asarray(source, dtype=float)
    distance = float(p) if p.ndim == 0 else float(np.hypot(p[0], p[1]))
    m = mean_snr(distance, budget)
    rng = seed if isinstance(seed, np.random.Generator) else substream(seed, "direct-opt")
    pool = rng.exponential(1.0, cfg.max_trials) * m
    for rate in sorted(cfg.rate_set, reverse=True):
        mcs = mcs_for_rate(rate)
        ok, _, _ = _decide(
            cfg.gamma,
            lambda n: per_at_snr(mcs, pool[:n], cfg.pdu_bytes, cache),
            cfg.per_trials,
            cfg.max_trials,
        )
        if ok:
            return direct_params(mcs)
    return direct_params(mcs_for_rate(min(cfg.rate_set)), compliant=False)


def optimize_coop(
    source: int,
    budget: LinkBudget | None = None,
    cfg: AdaptConfig | None = None,
    positions=None,
    seed=0,
    cache: CodedPerCache | None = None,
) -> TxParams:
    """Best (first-hop rate, second-hop rate, relay) for one-relay forwarding.

    `source` indexes into `positions` (all stations, access point at the
    origin). Because the two hops fade independently, the mean end-to-end
    PER factorizes into per-hop means, which are estimated once per
    (candidate, rate) and combined algebraically.
    """
    budget = budget or LinkBudget()
    cfg = cfg or AdaptConfig()
    cache = cache if cache is not None else default_cache()
    positions = np.asarray(positions, dtype=float)
    direct_best = optimize_direct(positions[source], budget, cfg, seed=seed, cache=cache)
    candidates = [i for i in range(positions.shape[0]) if i != source]
    if not candidates:
        return direct_best
    d1, d2 = _distances(positions, source, candidates)
    rng = substream(seed, "coop-hops")
    pool1 = rng.exponential(1.0, (cfg.max_trials, len(candidates))) * mean_snr(d1, budget)
    pool2 = rng.exponential(1.0, (cfg.max_trials, len(candidates))) * mean_snr(d2, budget)

    stats: dict[tuple[int, float, int], tuple[np.ndarray, np.ndarray]] = {}

    def hop_stats(hop: int, mcs: Mcs, n: int):
        key = (hop, mcs.rate_mbps, n)
        if key not in stats:
            pool = pool1 if hop == 1 else pool2
            values = per_at_snr(mcs, pool[:n], cfg.pdu_bytes, cache)
            stats[key] = _mean_hw(values)
        return stats[key]

    def feasible_relays(r1: Mcs, r2: Mcs, n: int) -> tuple[np.ndarray, np.ndarray]:
        m1v, hw1 = hop_stats(1, r1, n)
        m2v, hw2 = hop_stats(2, r2, n)
        est = 1.0 - (1.0 - m1v) * (1.0 - m2v)
        hw = np.sqrt(((1.0 - m2v) * hw1) ** 2 + ((1.0 - m1v) * hw2) ** 2)
        return est + hw <= cfg.gamma, (est - hw < cfg.gamma)

    for objective, r1, r2 in _sorted_pairs(cfg, "coopmac"):
        if objective <= direct_best.e2e_rate_mbps:
            break
        accept, maybe = feasible_relays(r1, r2, cfg.per_trials)
        if (maybe & ~accept).any():
            accept, _ = feasible_relays(r1, r2, cfg.max_trials)
        if accept.any():
            return coop_params(r1, r2, candidates[int(np.argmax(accept))])
    return direct_best


def optimize_dstc_greedy(
    source: int,
    budget: LinkBudget | None = None,
    cfg: AdaptConfig | None = None,
    positions=None,
    seed=0,
    cache: CodedPerCache | None = None,
) -> TxParams:
    """Greedy relay-set construction for the fixed-set space-time scheme.

    Starts from the single-relay optimum, then repeatedly adds the
    candidate that maximizes the achievable objective of the enlarged set,
    scoring each set size in the allowed dimension set and keeping the
    best. Falls back to the single-relay result (and through it, direct)
    when no set qualifies.
    """
    budget = budget or LinkBudget()
    cfg = cfg or AdaptConfig()
    cache = cache if cache is not None else default_cache()
    positions = np.asarray(positions, dtype=float)
    coop_best = optimize_coop(source, budget, cfg, positions, seed=seed, cache=cache)
    direct_rate = optimize_direct(
        positions[source], budget, cfg, seed=seed, cache=cache
    ).e2e_rate_mbps
    candidates = [i for i in range(positions.shape[0]) if i != source]
    sizes = sorted(set(cfg.stc_set))
    if len(candidates) < min(sizes, default=99):
        return coop_best
    d1, d2 = _distances(positions, source, candidates)
    pools = _RelayPools(
        substream(seed, "dstc-pools"),
        mean_snr(d1, budget),
        mean_snr(d2, budget),
        cfg.max_trials,
        0,
        cfg.pdu_bytes,
        cache,
    )
    col = {station: j for j, station in enumerate(candidates)}

    def proxy_relay(pool: Sequence[int]) -> int:
        # Stand-in when no candidate is provably feasible: smallest
        # bottleneck-hop distance, lowest station id on ties.
        cols = [col[j] for j in pool]
        return pool[int(np.argmin(np.maximum(d1[cols], d2[cols])))]

    if coop_best.scheme == "coopmac":
        seed_relay = coop_best.relay
    else:
        seed_relay = proxy_relay(candidates)

    def pick_addition(members_cols, rest, ell):
        rest_cols = [col[j] for j in rest]
        for objective, r1, r2 in _sorted_pairs(cfg, "dstc", ell):
            if objective <= direct_rate:
                break
            accept = _decide_vector(
                cfg.gamma,
                lambda n: pools.dstc_addition_values(r1, r2, members_cols, rest_cols, n),
                cfg.per_trials,
                cfg.max_trials,
            )
            if accept.any():
                return min(rest[k] for k in np.flatnonzero(accept))
        return proxy_relay(rest)

    def best_rates(members, ell):
        members_cols = [col[j] for j in members]
        for objective, r1, r2 in _sorted_pairs(cfg, "dstc", ell):
            if objective <= direct_rate:
                return None
            ok, _, _ = _decide(
                cfg.gamma,
                lambda n: pools.dstc_values(r1, r2, members_cols, n),
                cfg.per_trials,
                cfg.max_trials,
            )
            if ok:
                return dstc_params(r1, r2, RelaySet(tuple(sorted(members))))
        return None

    current = [seed_relay]
    rest = [j for j in candidates if j != seed_relay]
    best = None
    for ell in sizes:
        if ell > len(candidates):
            break
        while len(current) < ell and rest:
            j = pick_addition([col[m] for m in current], rest, ell)
            current.append(j)
            rest.remove(j)
        if len(current) != ell:
            break
        found = best_rates(current, ell)
        if found is not None and (best is None or found.e2e_rate_mbps > best.e2e_rate_mbps):
            best = found
    return best if best is not None else coop_best


def optimize_sticmac_cs(
    source: int,
    budget: LinkBudget | None = None,
    cfg: AdaptConfig | None = None,
    positions=None,
    seed=0,
    cache: CodedPerCache | None = None,
) -> TxParams:
    """Exhaustive search over (r1, r2, L) for opportunistic space-time
    relaying against the actual current topology."""
    budget = budget or LinkBudget()
    cfg = cfg or AdaptConfig()
    cache = cache if cache is not None else default_cache()
    positions = np.asarray(positions, dtype=float)
    direct_best = optimize_direct(positions[source], budget, cfg, seed=seed, cache=cache)
    candidates = [i for i in range(positions.shape[0]) if i != source]
    if not candidates:
        return direct_best
    d1, d2 = _distances(positions, source, candidates)
    pools = _RelayPools(
        substream(seed, "cs-pools"),
        mean_snr(d1, budget),
        mean_snr(d2, budget),
        cfg.max_trials,
        max(cfg.stc_set),
        cfg.pdu_bytes,
        cache,
    )
    combos = []
    for ell in sorted(set(cfg.stc_set)):
        for objective, r1, r2 in _sorted_pairs(cfg, "rdstc", ell):
            combos.append((objective, ell, r1, r2))
    combos.sort(key=lambda c: (-c[0], c[1], -c[2].rate_mbps))
    for objective, ell, r1, r2 in combos:
        if objective <= direct_best.e2e_rate_mbps:
            break
        ok, _, _ = _decide(
            cfg.gamma,
            lambda n: pools.rdstc_values(r1, r2, ell, n),
            cfg.per_trials,
            cfg.max_trials,
        )
        if ok:
            return rdstc_params(r1, r2, ell)
    return direct_best


# ---------------------------------------------------------------------------
# The user-count lookup table


def _params_to_dict(p: TxParams) -> dict:
    return {
        "scheme": p.scheme,
        "r1": p.r1.rate_mbps,
        "r2": p.r2.rate_mbps if p.r2 else None,
        "stc_dimension": p.stc_dimension,
        "relay": p.relay,
        "relay_set": list(p.relay_set.members) if p.relay_set else None,
        "compliant": p.compliant,
    }


def _params_from_dict(d: dict) -> TxParams:
    scheme = d["scheme"]
    r1 = mcs_for_rate(d["r1"])
    compliant = bool(d.get("compliant", True))
    if scheme == "direct":
        return direct_params(r1, compliant)
    r2 = mcs_for_rate(d["r2"])
    if scheme == "coopmac":
        return coop_params(r1, r2, int(d["relay"]), compliant)
    if scheme == "dstc":
        return dstc_params(r1, r2, RelaySet(tuple(d["relay_set"])), compliant)
    return rdstc_params(r1, r2, int(d["stc_dimension"]), compliant)


_TABLE_FORMAT = "uc-table"
_TABLE_VERSION = 1


@dataclass
class UcTable:
    """Pre-computed optimum per (user count, distance-to-AP bin).

    Entries average the PER constraint over uniform-disk placements of the
    other stations, so lookups need only the user count and the querying
    station's own distance.
    """

    n_grid: tuple[int, ...]
    distance_grid: tuple[float, ...]
    entries: dict[tuple[int, int], TxParams]
    meta: dict

    def lookup(self, n_users: int, distance: float) -> tuple[TxParams, bool]:
        """Nearest-bin entry and whether the query had to be clamped."""
        n_arr = np.asarray(self.n_grid)
        d_arr = np.asarray(self.distance_grid)
        i = int(np.argmin(np.abs(n_arr - n_users)))
        j = int(np.argmin(np.abs(d_arr - distance)))
        half_bin = np.diff(d_arr).max() / 2 if len(d_arr) > 1 else np.inf
        clamped = n_users not in self.n_grid or abs(d_arr[j] - distance) > half_bin
        return self.entries[(i, j)], bool(clamped)

    def save(self, path) -> None:
        doc = {
            "format": _TABLE_FORMAT,
            "version": _TABLE_VERSION,
            "n_grid": list(self.n_grid),
            "distance_grid": list(self.distance_grid),
            "meta": self.meta,
            "entries": [[i, j, _params_to_dict(p)] for (i, j), p in sorted(self.entries.items())],
        }
        Path(path).write_text(json.dumps(doc, indent=1))

    @classmethod
    def load(cls, path) -> "UcTable":
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != _TABLE_FORMAT or doc.get("version") != _TABLE_VERSION:
            raise ValueError(f"unrecognized table file {path}")
        return cls(
            n_grid=tuple(doc["n_grid"]),
            distance_grid=tuple(doc["distance_grid"]),
            entries={(int(i), int(j)): _params_from_dict(d) for i, j, d in doc["entries"]},
            meta=doc["meta"],
        )


def _table_meta(budget: LinkBudget, cfg: AdaptConfig, seed, topologies: int) -> dict:
    return {
        "budget": {
            "edge_es_n0": budget.edge_es_n0,
            "path_loss_exponent": budget.path_loss_exponent,
            "cell_radius_m": budget.cell_radius_m,
            "min_distance_m": budget.min_distance_m,
        },
        "cfg": {
            "gamma": cfg.gamma,
            "rate_set": list(cfg.rate_set),
            "stc_set": list(cfg.stc_set),
            "per_trials": cfg.per_trials,
            "max_trials": cfg.max_trials,
            "pdu_bytes": cfg.pdu_bytes,
        },
        "seed": seed,
        "topologies_per_cell": topologies,
    }


def build_uc_table(
    budget: LinkBudget | None = None,
    cfg: AdaptConfig | None = None,
    n_grid: Sequence[int] = (2, 4, 8, 16, 24, 32, 48),
    distance_grid: Sequence[float] | None = None,
    topologies_per_cell: int = 2000,
    seed=0,
    cache: CodedPerCache | None = None,
) -> UcTable:
    """Fill every (user count, distance) cell with its averaged optimum.

    Each Monte-Carlo trial draws a fresh uniform-disk placement of the
    other N-1 stations along with fresh fading, so the feasibility test
    targets the position-averaged PER.
    """
    budget = budget or LinkBudget()
    cfg = cfg or AdaptConfig()
    cache = cache if cache is not None else default_cache()
    if distance_grid is None:
        edges = np.arange(0.0, budget.cell_radius_m + 1e-9, 5.0)
        distance_grid = tuple((edges[:-1] + edges[1:]) / 2)
    distance_grid = tuple(float(d) for d in distance_grid)
    n_grid = tuple(int(n) for n in n_grid)
    cap = max(topologies_per_cell, cfg.per_trials)

    combos = []
    for ell in sorted(set(cfg.stc_set)):
        for objective, r1, r2 in _sorted_pairs(cfg, "rdstc", ell):
            combos.append((objective, ell, r1, r2))
    combos.sort(key=lambda c: (-c[0], c[1], -c[2].rate_mbps))

    entries: dict[tuple[int, int], TxParams] = {}
    for i, n_users in enumerate(n_grid):
        for j, distance in enumerate(distance_grid):
            rng = substream(seed, "uc-cell", n_users, round(distance * 1000))
            direct_best = optimize_direct(distance, budget, cfg, seed=rng, cache=cache)
            n_cand = n_users - 1
            if n_cand < 1:
                entries[(i, j)] = direct_best
                continue
            radii = budget.cell_radius_m * np.sqrt(rng.random((cap, n_cand)))
            theta = rng.random((cap, n_cand)) * 2 * np.pi
            x = radii * np.cos(theta)
            y = radii * np.sin(theta)
            d1 = np.hypot(x - distance, y)
            pools = _RelayPools(
                rng,
                mean_snr(d1, budget),
                mean_snr(radii, budget),
                cap,
                max(cfg.stc_set),
                cfg.pdu_bytes,
                cache,
            )
            chosen = direct_best
            for objective, ell, r1, r2 in combos:
                if objective <= direct_best.e2e_rate_mbps:
                    break
                if ell > n_cand:
                    continue
                ok, _, _ = _decide(
                    cfg.gamma,
                    lambda n: pools.rdstc_values(r1, r2, ell, n),
                    cfg.per_trials,
                    cap,
                )
                if ok:
                    chosen = rdstc_params(r1, r2, ell)
                    break
            entries[(i, j)] = chosen
    return UcTable(
        n_grid=n_grid,
        distance_grid=distance_grid,
        entries=entries,
        meta=_table_meta(budget, cfg, seed if isinstance(seed, int) else None, topologies_per_cell),
    )


def optimize_sticmac_uc(
    n_users: int,
    source_distance: float,
    budget: LinkBudget | None = None,
    cfg: AdaptConfig | None = None,
    table: UcTable | None = None,
) -> TxParams:
    """Table lookup keyed by user count and own distance only."""
    budget = budget or LinkBudget()
    cfg = cfg or AdaptConfig()
    if table is None:
        raise ValueError("a pre-built table is required")
    stored = table.meta.get("budget"), table.meta.get("cfg")
    expected = _table_meta(budget, cfg, None, 0)
    if stored != (expected["budget"], expected["cfg"]):
        raise ValueError("table was built for different parameters")
    params, _ = table.lookup(n_users, source_distance)
    return params


# ---------------------------------------------------------------------------
# Post-hoc evaluation


def evaluate_params(
    params: TxParams,
    source: int,
    positions,
    budget: LinkBudget | None = None,
    trials: int = 2000,
    seed=1,
    cache: CodedPerCache | None = None,
    pdu_bytes: int = DATA_PDU_BYTES,
) -> PerEstimate:
    """Re-measure the end-to-end PER that `params` achieves on a topology."""
    budget = budget or LinkBudget()
    cache = cache if cache is not None else default_cache()
    positions = np.asarray(positions, dtype=float)
    rng = seed if isinstance(seed, np.random.Generator) else substream(seed, "evaluate")
    src = positions[source]
    if params.scheme == "direct":
        values = sample_direct_per(src, params.r1, trials, rng, budget, pdu_bytes, cache)
    elif params.scheme == "coopmac":
        values = sample_coop_per(
            src, positions[params.relay], params.r1, params.r2, trials, rng, budget, pdu_bytes, cache
        )
    elif params.scheme == "dstc":
        values = sample_dstc_per(
            src,
            positions[list(params.relay_set.members)],
            params.r1,
            params.r2,
            trials,
            rng,
            budget,
            pdu_bytes,
            cache,
        )
    else:
        others = positions[[i for i in range(positions.shape[0]) if i != source]]
        values = sample_rdstc_per(
            src,
            others,
            params.r1,
            params.r2,
            stc_for_dimension(params.stc_dimension),
            trials,
            rng,
            budget,
            pdu_bytes,
            cache,
        )
    n = values.shape[0]
    mean = float(np.clip(values.mean(), 0.0, 1.0))
    hw = 1.96 * float(values.std(ddof=1)) / math.sqrt(n) if n > 1 else 0.5
    return PerEstimate(per=mean, trials=n, half_width_95=hw)
