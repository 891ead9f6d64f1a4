"""End-to-end packet error rates for the four transmission schemes.

All positions are metres in the plane with the access point at the
origin. Every estimator Monte-Carlo-averages over Rayleigh fading (and,
for the space-time-coded schemes, over relay decode outcomes and the
random weight matrix), Rao-Blackwellizing where it can: a trial's value
is the conditional failure probability given the drawn channels rather
than a raw Bernoulli outcome, which cuts the variance substantially.

Stub hooks (`hop1_per`, `hop2_per`, `ber_fn`) let tests replace sampled
hop error rates with fixed values or exact subset maps, so the averaging
machinery can be checked against closed-form enumeration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .coding import CodedPerCache, PerEstimate, default_cache
from .phy import (
    LinkBudget,
    Mcs,
    StcCode,
    ber_from_ser,
    mcs_for_rate,
    mean_snr,
    ser_square_qam,
)
from .seeds import substream

__all__ = [
    "DATA_PDU_BYTES",
    "RelaySet",
    "E2eScenario",
    "per_at_snr",
    "sample_direct_per",
    "sample_coop_per",
    "sample_dstc_per",
    "sample_rdstc_per",
    "per_e2e_direct",
    "per_e2e_coop",
    "per_e2e_dstc",
    "per_e2e_rdstc",
]

DATA_PDU_BYTES = 1500
DEFAULT_TRIALS = 2000

SCHEMES = ("direct", "coopmac", "dstc", "rdstc")


@dataclass(frozen=True)
class RelaySet:
    """An ordered set of relay station identifiers."""

    members: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(set(self.members)) != len(self.members):
            raise ValueError("relay set contains duplicates")

    def __len__(self) -> int:
        return len(self.members)

    @staticmethod
    def for_link(members: Sequence[int], source: int, destination: int) -> "RelaySet":
        members = tuple(members)
        if source in members or destination in members:
            raise ValueError("relay set may not contain the source or destination")
        return RelaySet(members)


@dataclass(frozen=True)
class E2eScenario:
    """A source, a map of everyone's positions, and how the source transmits."""

    source: int
    positions: np.ndarray
    scheme: str
    params: object = None

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError("positions must be an (n, 2) array")
        if not 0 <= self.source < pos.shape[0]:
            raise ValueError("source index out of range")
        object.__setattr__(self, "positions", pos)

    def validate_in_cell(self, budget: LinkBudget) -> None:
        if np.hypot(*self.positions[self.source]) > budget.cell_radius_m:
            raise ValueError("source lies outside the cell")


def _as_mcs(rate) -> Mcs:
    return rate if isinstance(rate, Mcs) else mcs_for_rate(float(rate))


def _distance(point) -> float:
    p = np.asarray(point, dtype=float)
    if p.ndim == 0:
        return float(p)
    return float(np.hypot(p[0], p[1]))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return substream(seed, "per-engine")


def _estimate(values: np.ndarray) -> PerEstimate:
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    mean = float(np.clip(values.mean(), 0.0, 1.0))
    hw = 1.96 * float(values.std(ddof=1)) / math.sqrt(n) if n > 1 else 0.5
    return PerEstimate(per=mean, trials=n, half_width_95=hw)


def per_at_snr(
    mcs,
    snr,
    pdu_bytes: int = DATA_PDU_BYTES,
    cache: CodedPerCache | None = None,
) -> np.ndarray:
    """Instantaneous coded PER at the given received SNR values.

    The uncoded symbol error rate maps to a bit error rate, which indexes
    the simulated PER of the coded PDU.
    """
    mcs = _as_mcs(mcs)
    cache = cache if cache is not None else default_cache()
    ber = ber_from_ser(mcs, ser_square_qam(mcs, np.asarray(snr, dtype=float)))
    return cache.lookup_many(mcs.code_rate, pdu_bytes, ber)


def _complex_gains(rng: np.random.Generator, mean: np.ndarray, shape) -> np.ndarray:
    """Rayleigh link gains with |h|^2 exponentially distributed at `mean`."""
    h = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    return h * np.sqrt(mean)


def _hop_per_values(
    rng: np.random.Generator,
    mean: np.ndarray,
    shape,
    mcs: Mcs,
    pdu_bytes: int,
    cache: CodedPerCache | None,
    ber_fn: Callable | None = None,
) -> np.ndarray:
    snr = rng.exponential(1.0, shape) * mean
    if ber_fn is not None:
        ber = np.asarray(ber_fn(mcs, snr), dtype=float)
        cache = cache if cache is not None else default_cache()
        return cache.lookup_many(mcs.code_rate, pdu_bytes, ber)
    return per_at_snr(mcs, snr, pdu_bytes, cache)


# ---------------------------------------------------------------------------
# Trial-value samplers (one conditional failure probability per trial)


def sample_direct_per(
    source,
    mcs,
    trials: int,
    rng: np.random.Generator,
    budget: LinkBudget | None = None,
    pdu_bytes: int = DATA_PDU_BYTES,
    cache: CodedPerCache | None = None,
    ber_fn: Callable | None = None,
) -> np.ndarray:
    budget = budget or LinkBudget()
    mean = mean_snr(_distance(source), budget)
    return _hop_per_values(rng, mean, trials, _as_mcs(mcs), pdu_bytes, cache, ber_fn)


def sample_coop_per(
    source,
    relay,
    r1,
    r2,
    trials: int,
    rng: np.random.Generator,
    budget: LinkBudget | None = None,
    pdu_bytes: int = DATA_PDU_BYTES,
    cache: CodedPerCache | None = None,
    hop1_per: float | None = None,
    hop2_per: float | None = None,
) -> np.ndarray:
    """Two-hop relay without destination combining: fail if either hop fails."""
    budget = budget or LinkBudget()
    src = np.asarray(source, dtype=float)
    rel = np.asarray(relay, dtype=float)
    if hop1_per is not None:
        p1 = np.full(trials, float(hop1_per))
    else:
        m1 = mean_snr(_distance(src - rel), budget)
        p1 = _hop_per_values(rng, m1, trials, _as_mcs(r1), pdu_bytes, cache)
    if hop2_per is not None:
        p2 = np.full(trials, float(hop2_per))
    else:
        m2 = mean_snr(_distance(rel), budget)
        p2 = _hop_per_values(rng, m2, trials, _as_mcs(r2), pdu_bytes, cache)
    return 1.0 - (1.0 - p1) * (1.0 - p2)


def _resolve_hop1(
    rng: np.random.Generator,
    trials: int,
    source,
    relay_positions: np.ndarray,
    r1,
    budget: LinkBudget,
    pdu_bytes: int,
    cache: CodedPerCache | None,
    hop1_per,
) -> np.ndarray:
    """Per-trial, per-candidate first-hop decode failure probabilities."""
    n = relay_positions.shape[0]
    if hop1_per is not None:
        return np.broadcast_to(np.asarray(hop1_per, dtype=float), (trials, n)).copy()
    src = np.asarray(source, dtype=float)
    d1 = np.hypot(*(relay_positions - src).T)
    m1 = mean_snr(d1, budget)
    return _hop_per_values(rng, m1, (trials, n), _as_mcs(r1), pdu_bytes, cache)


def _hop2_from_gains(
    snr2: np.ndarray,
    any_decoded: np.ndarray,
    r2,
    pdu_bytes: int,
    cache: CodedPerCache | None,
) -> np.ndarray:
    p2 = per_at_snr(r2, snr2, pdu_bytes, cache)
    return np.where(any_decoded, p2, 1.0)


def _hop2_from_stub(decoded: np.ndarray, hop2_per) -> np.ndarray:
    if callable(hop2_per):
        values = np.empty(decoded.shape[0])
        for t in range(decoded.shape[0]):
            survivors = tuple(int(i) for i in np.flatnonzero(decoded[t]))
            values[t] = hop2_per(survivors)
        return values
    out = np.full(decoded.shape[0], float(hop2_per))
    out[~decoded.any(axis=1)] = 1.0
    return out


def sample_dstc_per(
    source,
    relay_positions,
    r1,
    r2,
    trials: int,
    rng: np.random.Generator,
    budget: LinkBudget | None = None,
    pdu_bytes: int = DATA_PDU_BYTES,
    cache: CodedPerCache | None = None,
    hop1_per=None,
    hop2_per=None,
) -> np.ndarray:
    """Fixed relay set; the survivors of hop 1 forward one space-time row each.

    With identity weights restricted to the survivors, the second hop's
    effective SNR is the sum of the survivors' link gains to the
    destination. An empty survivor set is an end-to-end failure.
    """
    budget = budget or LinkBudget()
    relay_positions = np.atleast_2d(np.asarray(relay_positions, dtype=float))
    p1 = _resolve_hop1(
        rng, trials, source, relay_positions, r1, budget, pdu_bytes, cache, hop1_per
    )
    decoded = rng.random(p1.shape) >= p1
    if hop2_per is not None:
        return _hop2_from_stub(decoded, hop2_per)
    d2 = np.hypot(*relay_positions.T)
    m2 = mean_snr(d2, budget)
    h2 = _complex_gains(rng, m2, p1.shape)
    snr2 = np.sum(np.abs(h2) ** 2 * decoded, axis=1)
    return _hop2_from_gains(snr2, decoded.any(axis=1), r2, pdu_bytes, cache)


def sample_rdstc_per(
    source,
    candidate_positions,
    r1,
    r2,
    stc: StcCode,
    trials: int,
    rng: np.random.Generator,
    budget: LinkBudget | None = None,
    pdu_bytes: int = DATA_PDU_BYTES,
    cache: CodedPerCache | None = None,
    hop1_per=None,
    hop2_per=None,
) -> np.ndarray:
    """Opportunistic relays: whoever decodes hop 1 forwards through a fresh
    random weight matrix mapping its antenna to all L space-time streams."""
    budget = budget or LinkBudget()
    candidate_positions = np.atleast_2d(np.asarray(candidate_positions, dtype=float))
    n = candidate_positions.shape[0]
    if n == 0:
        return np.ones(trials)
    p1 = _resolve_hop1(
        rng, trials, source, candidate_positions, r1, budget, pdu_bytes, cache, hop1_per
    )
    decoded = rng.random(p1.shape) >= p1
    if hop2_per is not None:
        return _hop2_from_stub(decoded, hop2_per)
    d2 = np.hypot(*candidate_positions.T)
    m2 = mean_snr(d2, budget)
    h2 = _complex_gains(rng, m2, (trials, n))
    ell = stc.dimension
    weights = (
        rng.standard_normal((trials, n, ell)) + 1j * rng.standard_normal((trials, n, ell))
    ) / math.sqrt(2.0 * ell)
    effective = np.einsum("tn,tnl->tl", h2 * decoded, weights)
    snr2 = np.sum(np.abs(effective) ** 2, axis=1)
    return _hop2_from_gains(snr2, decoded.any(axis=1), r2, pdu_bytes, cache)


# ---------------------------------------------------------------------------
# Public estimators


def per_e2e_direct(
    source,
    mcs,
    budget: LinkBudget | None = None,
    trials: int = DEFAULT_TRIALS,
    seed=0,
    **kwargs,
) -> PerEstimate:
    """Average PER of the one-hop link, over fading."""
    if trials < 1:
        raise ValueError("trials must be positive")
    values = sample_direct_per(source, mcs, trials, _rng(seed), budget, **kwargs)
    return _estimate(values)


def per_e2e_coop(
    source,
    relay,
    r1,
    r2,
    budget: LinkBudget | None = None,
    trials: int = DEFAULT_TRIALS,
    seed=0,
    **kwargs,
) -> PerEstimate:
    """Average PER of a single decode-and-forward relay path."""
    if trials < 1:
        raise ValueError("trials must be positive")
    values = sample_coop_per(source, relay, r1, r2, trials, _rng(seed), budget, **kwargs)
    return _estimate(values)


def per_e2e_dstc(
    source,
    relay_positions,
    r1,
    r2,
    stc: StcCode | None = None,
    budget: LinkBudget | None = None,
    trials: int = DEFAULT_TRIALS,
    seed=0,
    **kwargs,
) -> PerEstimate:
    """Average PER of the fixed-relay-set space-time scheme."""
    if trials < 1:
        raise ValueError("trials must be positive")
    relay_positions = np.atleast_2d(np.asarray(relay_positions, dtype=float))
    if stc is not None and relay_positions.shape[0] != stc.dimension:
        raise ValueError("relay set size must match the space-time dimension")
    values = sample_dstc_per(
        source, relay_positions, r1, r2, trials, _rng(seed), budget, **kwargs
    )
    return _estimate(values)


def per_e2e_rdstc(
    source,
    r1,
    r2,
    stc: StcCode,
    budget: LinkBudget | None = None,
    positions=None,
    trials: int = DEFAULT_TRIALS,
    seed=0,
    **kwargs,
) -> PerEstimate:
    """Average PER of the randomized space-time scheme over all candidates."""
    if trials < 1:
        raise ValueError("trials must be positive")
    if positions is None:
        raise ValueError("candidate positions are required")
    values = sample_rdstc_per(
        source, positions, r1, r2, stc, trials, _rng(seed), budget, **kwargs
    )
    return _estimate(values)
