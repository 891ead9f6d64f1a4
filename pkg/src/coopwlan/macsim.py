"""Slot-level MAC engine for one contention cell with relay-assisted transactions.

Every station senses every other, so a single global busy/idle timeline
drives the contention state: backoff counters count down in 9 us slots
while the medium is idle, freeze during busy periods, and resume one DIFS
after each release. Stations whose counters reach zero in the same slot
collide. Transactions themselves are laid out frame by frame at
microsecond resolution, with each receiver's decode drawn from the
coded-error pipeline at the instantaneous link gain of one block-fading
realization per attempt (and one combining-weight draw per attempt for
the randomized second hop).

Four transaction templates are keyed by the scheme string carried in a
station's transmit parameters:

* ``direct``  - RTS / CTS / DATA / ACK against the access point.
* ``coopmac`` - a named helper confirms with HTS, receives the payload at
  the first-hop rate, and forwards it at the second-hop rate.
* ``rdstc``   - a recruitment frame invites every station that can decode
  it; the decoders answer (and later forward) in unison under a
  randomized space-time code, so the access point sees the combined
  equivalent channel of whoever actually participated.
* ``dstc``    - a fixed relay set steers the same unison second hop, at
  the price of extra signaling: named relay bytes on the recruitment
  frame, one confirmation slot and one pilot slot per relay.

With ``mode="rts_off"`` the reservation handshake is dropped and the
second-hop parameters ride a small shim header on the data frame itself,
which makes collisions cost a full data airtime instead of a short
control frame.

Timeout convention: a transmitter plays out the scheduled remainder of
the exchange and declares failure one guard interval after the deadline
of the response it is waiting on (CTS for the reservation phase, ACK for
the data phase). Scheduled windows nobody won, e.g. an HTS slot with no
recruits, still elapse; the waiter cannot reclaim them. Failed attempts
double the contention window and retry until the retry limit drops the
packet.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coding import CodedPerCache, default_cache
from .per_engine import DATA_PDU_BYTES, per_at_snr
from .phy import (
    BASE_RATE,
    ChannelRealization,
    LinkBudget,
    Mcs,
    StcCode,
    sample_realization,
    stc_for_dimension,
)
from .rate_adapt import TxParams
from .seeds import substream

__all__ = [
    "FRAME_KINDS",
    "OVERHEAD_KINDS",
    "AP_SENDER",
    "NOISE_FLOOR_DBM",
    "INTERFERENCE_FLOOR_DBM",
    "MacTimings",
    "Frame",
    "Emission",
    "TransactionOutcome",
    "MacMetrics",
    "MacSimulation",
    "frame_airtime",
    "run_transaction",
    "dcf_engine",
    "interference_probe",
    "write_event_trace",
]

FRAME_KINDS = ("RTS", "HR", "HTS", "CTS", "DATA_S", "DATA_R", "ACK")
# Slot-granularity signaling that is not a full PHY frame: per-relay
# recruitment confirmations and channel-estimation pilots.
OVERHEAD_KINDS = ("RELAY_ACK", "PILOT")

RTS_BYTES = 20
CTS_BYTES = 14
ACK_BYTES = 14
HTS_BYTES = 14
RECRUIT_BYTES = 22
SHIM_BYTES = 2  # second-hop parameter header prepended to data in rts_off mode
SERVICE_TAIL_BITS = 22  # 16-bit service field plus 6 tail bits

NOISE_FLOOR_DBM = -95.0  # thermal noise plus receiver figure over the 20 MHz channel
INTERFERENCE_FLOOR_DBM = -300.0  # reported when nothing was on the air

AP_SENDER = -1  # sender sentinel for the access point in emission records

_DATA_KINDS = frozenset({"DATA_S", "DATA_R"})


@dataclass(frozen=True)
class MacTimings:
    """Contention and framing constants (ERP OFDM short-slot values)."""

    slot_us: float = 9.0
    sifs_us: float = 16.0
    difs_us: float = 34.0
    preamble_us: float = 20.0
    symbol_us: float = 4.0
    guard_us: float = 9.0
    cw_min: int = 15
    cw_max: int = 1023
    retry_limit: int = 7

    def __post_init__(self):
        if min(self.slot_us, self.sifs_us, self.difs_us, self.symbol_us) <= 0:
            raise ValueError("timing intervals must be positive")
        if not 0 < self.cw_min <= self.cw_max:
            raise ValueError("contention window bounds out of order")


@dataclass(frozen=True)
class Frame:
    """One PHY frame as the airtime calculator sees it."""

    kind: str
    n_bytes: int
    rate: Mcs
    stc: StcCode | None = None

    def __post_init__(self):
        if self.kind not in FRAME_KINDS:
            raise ValueError(f"unknown frame kind {self.kind!r}")
        if self.n_bytes < 0:
            raise ValueError("negative frame body")


def frame_airtime(frame: Frame, timings: MacTimings | None = None) -> float:
    """Airtime of one frame in microseconds.

    A fixed preamble plus a whole number of OFDM symbols covering the
    service and tail bits and the body; an orthogonal space-time code of
    rate R_c stretches the symbol count by 1/R_c.
    """
    t = timings or MacTimings()
    bits = SERVICE_TAIL_BITS + 8 * frame.n_bytes
    per_symbol = int(round(frame.rate.rate_mbps * t.symbol_us))
    symbols = -(-bits // per_symbol)
    if frame.stc is not None and frame.stc.code_rate != 1:
        symbols = math.ceil(symbols / frame.stc.code_rate)
    return t.preamble_us + t.symbol_us * symbols


@dataclass(frozen=True)
class Emission:
    """One on-air transmission within a transaction, offsets from its start.

    Unison frames carry every simultaneous sender; the access point
    appears as AP_SENDER.
    """

    kind: str
    start_us: float
    duration_us: float
    senders: tuple[int, ...]


@dataclass
class TransactionOutcome:
    success: bool
    elapsed_us: float
    emissions: list[Emission]
    aborted_handshake: bool = False


class _Exchange:
    """Frame-by-frame schedule of one transaction attempt.

    Tracks elapsed time, on-air emissions, and decode draws against one
    channel realization. With jammed=True every receiver fails and no
    randomness is consumed, which is exactly what a collision looks like
    from inside one collider: it runs its unconditional schedule and
    times out at its response deadline.
    """

    def __init__(self, source, realization, rng, timings, cache, pdu_bytes, jammed):
        self.source = int(source)
        self.real = realization
        self.g = realization.gains
        self.ap = realization.ap_index
        self.rng = rng
        self.timings = timings
        self.cache = cache
        self.pdu = int(pdu_bytes)
        self.jammed = jammed
        self.t = 0.0
        self.emissions: list[Emission] = []

    def snr(self, i: int, j: int) -> float:
        return float(abs(self.g[i, j]) ** 2)

    def snr_vec(self, i: int, js: np.ndarray) -> np.ndarray:
        return np.abs(self.g[i, js]) ** 2

    def _sender(self, i: int) -> int:
        return AP_SENDER if i == self.ap else int(i)

    def frame(self, kind, n_bytes, rate, senders, stc=None) -> float:
        """Advance the clock by one frame; empty senders is a silent window."""
        dur = frame_airtime(Frame(kind, n_bytes, rate, stc), self.timings)
        if senders:
            self.emissions.append(
                Emission(kind, self.t, dur, tuple(self._sender(s) for s in senders))
            )
        self.t += dur
        return dur

    def block(self, kind, active, total_slots: int) -> None:
        """total_slots consecutive signaling slots; `active` maps slot -> station."""
        slot = self.timings.slot_us
        for idx, station in active:
            self.emissions.append(Emission(kind, self.t + idx * slot, slot, (int(station),)))
        self.t += total_slots * slot

    def sifs(self) -> None:
        self.t += self.timings.sifs_us

    def _decode_bytes(self, kind: str, n_bytes: int) -> int:
        # Shim headers change airtime but ride the standard payload error
        # curve; control frames use their exact-length curves.
        return self.pdu if kind in _DATA_KINDS else n_bytes

    def decode(self, rate: Mcs, snr: float, kind: str, n_bytes: int) -> bool:
        if self.jammed:
            return False
        nb = self._decode_bytes(kind, n_bytes)
        per = float(per_at_snr(rate, np.array([snr]), nb, self.cache)[0])
        return bool(self.rng.random() >= per)

    def decode_many(self, rate: Mcs, snrs: np.ndarray, kind: str, n_bytes: int) -> np.ndarray:
        snrs = np.asarray(snrs, dtype=float)
        if self.jammed or snrs.size == 0:
            return np.zeros(snrs.shape, dtype=bool)
        nb = self._decode_bytes(kind, n_bytes)
        per = per_at_snr(rate, snrs, nb, self.cache)
        return self.rng.random(snrs.shape) >= per

    def fail(self, aborted: bool) -> TransactionOutcome:
        return TransactionOutcome(False, self.t + self.timings.guard_us, self.emissions, aborted)

    def done(self) -> TransactionOutcome:
        return TransactionOutcome(True, self.t, self.emissions)


def _run_direct(x: _Exchange, params: TxParams, mode: str) -> TransactionOutcome:
    src, ap = x.source, x.ap
    if mode == "rts_on":
        x.frame("RTS", RTS_BYTES, BASE_RATE, (src,))
        ap_ready = x.decode(BASE_RATE, x.snr(src, ap), "RTS", RTS_BYTES)
        x.sifs()
        x.frame("CTS", CTS_BYTES, BASE_RATE, (ap,) if ap_ready else ())
        if not (ap_ready and x.decode(BASE_RATE, x.snr(ap, src), "CTS", CTS_BYTES)):
            return x.fail(aborted=True)
        x.sifs()
    x.frame("DATA_S", x.pdu, params.r1, (src,))
    at_ap = x.decode(params.r1, x.snr(src, ap), "DATA_S", x.pdu)
    x.sifs()
    x.frame("ACK", ACK_BYTES, BASE_RATE, (ap,) if at_ap else ())
    if at_ap and x.decode(BASE_RATE, x.snr(ap, src), "ACK", ACK_BYTES):
        return x.done()
    return x.fail(aborted=False)


def _run_coopmac(x: _Exchange, params: TxParams, mode: str) -> TransactionOutcome:
    src, ap, helper = x.source, x.ap, params.relay
    r1, r2 = params.r1, params.r2
    if mode == "rts_on":
        x.frame("RTS", RTS_BYTES, BASE_RATE, (src,))
        ap_rts = x.decode(BASE_RATE, x.snr(src, ap), "RTS", RTS_BYTES)
        helper_in = x.decode(BASE_RATE, x.snr(src, helper), "RTS", RTS_BYTES)
        x.sifs()
        x.frame("HTS", HTS_BYTES, BASE_RATE, (helper,) if helper_in else ())
        confirmed = helper_in and x.decode(BASE_RATE, x.snr(helper, ap), "HTS", HTS_BYTES)
        x.sifs()
        ready = ap_rts and confirmed
        x.frame("CTS", CTS_BYTES, BASE_RATE, (ap,) if ready else ())
        if not (ready and x.decode(BASE_RATE, x.snr(ap, src), "CTS", CTS_BYTES)):
            return x.fail(aborted=True)
        x.sifs()
        data_bytes = x.pdu
    else:
        helper_in = True
        data_bytes = x.pdu + SHIM_BYTES
    x.frame("DATA_S", data_bytes, r1, (src,))
    at_helper = helper_in and x.decode(r1, x.snr(src, helper), "DATA_S", data_bytes)
    x.sifs()
    x.frame("DATA_R", x.pdu, r2, (helper,) if at_helper else ())
    at_ap = at_helper and x.decode(r2, x.snr(helper, ap), "DATA_R", x.pdu)
    x.sifs()
    x.frame("ACK", ACK_BYTES, BASE_RATE, (ap,) if at_ap else ())
    if at_ap and x.decode(BASE_RATE, x.snr(ap, src), "ACK", ACK_BYTES):
        return x.done()
    return x.fail(aborted=False)


def _run_rdstc(x: _Exchange, params: TxParams, mode: str) -> TransactionOutcome:
    src, ap = x.source, x.ap
    n = x.g.shape[0] - 1
    cand = np.array([j for j in range(n) if j != src], dtype=int)
    r1, r2 = params.r1, params.r2
    stc = stc_for_dimension(params.stc_dimension)
    weights = np.asarray(x.real.weight_matrix)[: cand.size, : stc.dimension]

    def unison_snr(mask: np.ndarray) -> float:
        h_eq = (x.g[cand, ap] * mask) @ weights
        return float(np.linalg.norm(h_eq) ** 2)

    if mode == "rts_on":
        x.frame("RTS", RTS_BYTES, BASE_RATE, (src,))
        ap_rts = x.decode(BASE_RATE, x.snr(src, ap), "RTS", RTS_BYTES)
        x.sifs()
        x.frame("HR", RECRUIT_BYTES, r1, (src,))
        recruited = x.decode_many(r1, x.snr_vec(src, cand), "HR", RECRUIT_BYTES)
        x.sifs()
        senders = tuple(int(c) for c in cand[recruited])
        x.frame("HTS", HTS_BYTES, r2, senders, stc=stc)
        confirmed = (
            bool(senders)
            and ap_rts
            and x.decode(r2, unison_snr(recruited), "HTS", HTS_BYTES)
        )
        x.sifs()
        x.frame("CTS", CTS_BYTES, BASE_RATE, (ap,) if confirmed else ())
        if not (confirmed and x.decode(BASE_RATE, x.snr(ap, src), "CTS", CTS_BYTES)):
            return x.fail(aborted=True)
        x.sifs()
        data_bytes = x.pdu
    else:
        # The shim names L and the second-hop rate; whoever decodes the
        # data frame participates.
        recruited = np.ones(cand.size, dtype=bool)
        data_bytes = x.pdu + SHIM_BYTES
    x.frame("DATA_S", data_bytes, r1, (src,))
    got_data = x.decode_many(r1, x.snr_vec(src, cand), "DATA_S", data_bytes)
    x.sifs()
    forward = recruited & got_data
    senders = tuple(int(c) for c in cand[forward])
    x.frame("DATA_R", x.pdu, r2, senders, stc=stc)
    at_ap = bool(senders) and x.decode(r2, unison_snr(forward), "DATA_R", x.pdu)
    x.sifs()
    x.frame("ACK", ACK_BYTES, BASE_RATE, (ap,) if at_ap else ())
    if at_ap and x.decode(BASE_RATE, x.snr(ap, src), "ACK", ACK_BYTES):
        return x.done()
    return x.fail(aborted=False)


def _run_dstc(x: _Exchange, params: TxParams, mode: str) -> TransactionOutcome:
    src, ap = x.source, x.ap
    members = np.array(params.relay_set.members, dtype=int)
    ell = members.size
    r1, r2 = params.r1, params.r2
    stc = stc_for_dimension(params.stc_dimension)

    def set_snr(mask: np.ndarray) -> float:
        # Fixed assignment of relays to code branches: identity weights,
        # so the equivalent channel power is the sum over participants.
        return float(np.sum(np.abs(x.g[members, ap]) ** 2 * mask))

    def active(mask: np.ndarray):
        return [(k, int(m)) for k, m in enumerate(members) if mask[k]]

    if mode == "rts_on":
        x.frame("RTS", RTS_BYTES, BASE_RATE, (src,))
        ap_rts = x.decode(BASE_RATE, x.snr(src, ap), "RTS", RTS_BYTES)
        x.sifs()
        # Recruitment names the relay set: one index byte per member.
        x.frame("HR", RECRUIT_BYTES + ell, r1, (src,))
        recruited = x.decode_many(r1, x.snr_vec(src, members), "HR", RECRUIT_BYTES + ell)
        x.sifs()
        x.block("RELAY_ACK", active(recruited), ell)
        x.sifs()
        x.block("PILOT", active(recruited), ell)
        x.sifs()
        senders = tuple(int(m) for m in members[recruited])
        x.frame("HTS", HTS_BYTES, r2, senders, stc=stc)
        confirmed = (
            bool(senders)
            and ap_rts
            and x.decode(r2, set_snr(recruited), "HTS", HTS_BYTES)
        )
        x.sifs()
        x.frame("CTS", CTS_BYTES, BASE_RATE, (ap,) if confirmed else ())
        if not (confirmed and x.decode(BASE_RATE, x.snr(ap, src), "CTS", CTS_BYTES)):
            return x.fail(aborted=True)
        x.sifs()
        data_bytes = x.pdu
    else:
        recruited = np.ones(ell, dtype=bool)
        data_bytes = x.pdu + SHIM_BYTES + ell
    x.frame("DATA_S", data_bytes, r1, (src,))
    got_data = x.decode_many(r1, x.snr_vec(src, members), "DATA_S", data_bytes)
    x.sifs()
    forward = recruited & got_data
    if mode == "rts_off":
        # No reservation phase carried the pilots, so they ride here.
        x.block("PILOT", active(forward), ell)
        x.sifs()
    senders = tuple(int(m) for m in members[forward])
    x.frame("DATA_R", x.pdu, r2, senders, stc=stc)
    at_ap = bool(senders) and x.decode(r2, set_snr(forward), "DATA_R", x.pdu)
    x.sifs()
    x.frame("ACK", ACK_BYTES, BASE_RATE, (ap,) if at_ap else ())
    if at_ap and x.decode(BASE_RATE, x.snr(ap, src), "ACK", ACK_BYTES):
        return x.done()
    return x.fail(aborted=False)


_RUNNERS = {
    "direct": _run_direct,
    "coopmac": _run_coopmac,
    "dstc": _run_dstc,
    "rdstc": _run_rdstc,
}


def run_transaction(
    source: int,
    params: TxParams,
    realization: ChannelRealization,
    *,
    mode: str = "rts_on",
    rng=None,
    timings: MacTimings | None = None,
    cache: CodedPerCache | None = None,
    pdu_bytes: int = DATA_PDU_BYTES,
    jammed: bool = False,
) -> TransactionOutcome:
    """Play one channel access frame by frame and report how it went.

    elapsed_us runs from the channel grant to the trailing edge of the
    last frame on success, or to the awaited response's deadline plus the
    guard interval on failure. jammed=True forces every decode to fail
    (a collision as seen by one collider) and consumes no randomness.
    """
    if mode not in ("rts_on", "rts_off"):
        raise ValueError(f"unknown access mode {mode!r}")
    try:
        runner = _RUNNERS[params.scheme]
    except KeyError:
        raise ValueError(f"no transaction template for scheme {params.scheme!r}") from None
    timings = timings or MacTimings()
    cache = cache if cache is not None else default_cache()
    if not isinstance(rng, np.random.Generator):
        rng = substream(0 if rng is None else rng, "transaction")
    x = _Exchange(source, realization, rng, timings, cache, pdu_bytes, jammed)
    return runner(x, params, mode)


# ---------------------------------------------------------------------------
# Contention engine


@dataclass
class MacMetrics:
    """Counters and logs accumulated over a simulation.

    delivered_bits counts payload bits only, credited when the sender
    decodes the ACK; delay samples run from the moment a packet reached
    the head of its queue to the end of the transaction that delivered
    it, and dropped packets leave no sample. airtime_by_kind sums
    transmitted airtime per frame kind (colliding and unison transmitters
    each count). tx_segments holds (positions, airtime) pairs, one row
    per station plus the access point last, for interference accounting;
    a new segment starts whenever the topology is reconfigured.
    """

    n_stations: int
    duration_us: float = 0.0
    delivered_bits: np.ndarray = field(default_factory=lambda: np.zeros(0))
    delay_samples_us: list[float] = field(default_factory=list)
    airtime_by_kind: dict[str, float] = field(default_factory=dict)
    attempts: int = 0
    successes: int = 0
    collisions: int = 0
    drops: int = 0
    handshake_aborts: int = 0
    tx_segments: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def throughput_mbps(self) -> float:
        """Aggregate delivered payload rate; bits per microsecond is Mbps."""
        if self.duration_us <= 0:
            return 0.0
        return float(self.delivered_bits.sum() / self.duration_us)

    def per_station_throughput_mbps(self) -> np.ndarray:
        if self.duration_us <= 0:
            return np.zeros(self.n_stations)
        return self.delivered_bits / self.duration_us

    def mean_delay_ms(self) -> float:
        if not self.delay_samples_us:
            return float("nan")
        return float(np.mean(self.delay_samples_us)) / 1e3

    def busy_airtime_us(self) -> float:
        return float(sum(self.airtime_by_kind.values()))


def _check_station_params(i: int, p: TxParams, n: int) -> None:
    if p.scheme == "coopmac":
        if not (0 <= p.relay < n) or p.relay == i:
            raise ValueError(f"station {i}: helper index {p.relay} out of range")
    elif p.scheme == "dstc":
        members = p.relay_set.members
        if len(set(members)) != len(members):
            raise ValueError(f"station {i}: duplicate relay set members")
        for m in members:
            if not (0 <= m < n) or m == i:
                raise ValueError(f"station {i}: relay index {m} out of range")
    elif p.scheme == "rdstc":
        if n < 2:
            raise ValueError("randomized relaying needs at least one candidate relay")


class MacSimulation:
    """Saturated or constant-rate contention in one cell.

    configure() installs the topology and each station's transmit
    parameters; calling it again (e.g. every mobility epoch) starts a new
    interference segment while queues, contention state, and metrics
    carry over. run() advances the simulation clock; it may be called
    repeatedly and a transaction in flight at the deadline completes. One
    generator seeds everything, so equal seeds give identical runs.

    traffic is "saturated" (every station always backlogged) or an
    offered load in bits/s per station, served from an unbounded FIFO fed
    at constant intervals with per-station phase stagger.
    """

    def __init__(
        self,
        *,
        mode: str = "rts_on",
        traffic="saturated",
        budget: LinkBudget | None = None,
        timings: MacTimings | None = None,
        seed=0,
        cache: CodedPerCache | None = None,
        pdu_bytes: int = DATA_PDU_BYTES,
        trace: bool = False,
    ):
        if mode not in ("rts_on", "rts_off"):
            raise ValueError(f"unknown access mode {mode!r}")
        if traffic != "saturated":
            traffic = float(traffic)
            if traffic <= 0:
                raise ValueError("offered load must be positive")
        self.mode = mode
        self.traffic = traffic
        self.budget = budget or LinkBudget()
        self.timings = timings or MacTimings()
        self.cache = cache if cache is not None else default_cache()
        self.pdu_bytes = int(pdu_bytes)
        self.rng = seed if isinstance(seed, np.random.Generator) else substream(seed, "mac")
        self.trace = bool(trace)
        self.events: list[tuple[float, int, str, str]] = []
        self.now_us = 0.0
        self.metrics: MacMetrics | None = None
        self._n = 0
        self._positions: np.ndarray | None = None
        self._params: list[TxParams] = []
        self._cw: list[int] = []
        self._retry: list[int] = []
        self._backoff: list[int] = []
        self._hol: list[float] = []
        self._queue: list[deque] | None = None
        self._next_arrival: np.ndarray | None = None
        self._period_us = math.inf
        self._seg_airtime: np.ndarray | None = None
        self._dummy_real: ChannelRealization | None = None

    # -- setup

    def configure(self, positions, params_list) -> None:
        positions = np.asarray(positions, dtype=float).reshape(-1, 2)
        n = positions.shape[0]
        params = list(params_list)
        if len(params) != n:
            raise ValueError("one parameter set per station required")
        for i, p in enumerate(params):
            _check_station_params(i, p, n)
        if self.metrics is None:
            self._n = n
            self.metrics = MacMetrics(n_stations=n, delivered_bits=np.zeros(n))
            self._cw = [self.timings.cw_min] * n
            self._retry = [0] * n
            self._hol = [0.0] * n
            if self.traffic == "saturated":
                self._queue = None
                self._backoff = [self._draw(self.timings.cw_min) for _ in range(n)]
            else:
                self._queue = [deque() for _ in range(n)]
                self._backoff = [0] * n
                self._period_us = 8.0 * self.pdu_bytes / self.traffic * 1e6
                self._next_arrival = self._period_us * np.arange(n) / n
            self._seg_airtime = np.zeros(n + 1)
        else:
            if n != self._n:
                raise ValueError("station count is fixed for the lifetime of a simulation")
            self._flush_segment()
        self._positions = positions.copy()
        self._params = params

    def _flush_segment(self) -> None:
        if self._seg_airtime is not None and self._seg_airtime.any():
            pts = np.vstack([self._positions, [[0.0, 0.0]]])
            self.metrics.tx_segments.append((pts, self._seg_airtime.copy()))
        self._seg_airtime = np.zeros(self._n + 1)

    def _draw(self, cw: int) -> int:
        return int(self.rng.integers(0, cw + 1))

    # -- traffic

    def _backlogged(self, i: int) -> bool:
        return True if self._queue is None else bool(self._queue[i])

    def _any_backlogged(self) -> bool:
        return any(self._backlogged(i) for i in range(self._n))

    def _next_arrival_time(self) -> float:
        if self._next_arrival is None:
            return math.inf
        return float(self._next_arrival.min())

    def _admit_arrivals(self) -> None:
        if self._queue is None:
            return
        # Admission tolerance must dominate the countdown's rounding slack
        # or an arrival can round to "due now" yet never be admitted.
        for i in range(self._n):
            while self._next_arrival[i] <= self.now_us + 1e-6:
                arrival = float(self._next_arrival[i])
                if not self._queue[i]:
                    self._hol[i] = arrival
                    self._cw[i] = self.timings.cw_min
                    self._retry[i] = 0
                    self._backoff[i] = self._draw(self._cw[i])
                self._queue[i].append(arrival)
                self._next_arrival[i] += self._period_us

    # -- contention cycle

    def _countdown(self) -> list[int]:
        T = self.timings
        while True:
            active = [i for i in range(self._n) if self._backlogged(i)]
            m = min(self._backoff[i] for i in active)
            k = m
            nxt = self._next_arrival_time()
            if nxt < math.inf:
                to_arrival = max(0, math.ceil((nxt - self.now_us) / T.slot_us - 1e-9))
                k = min(m, to_arrival)
            self.now_us += k * T.slot_us
            for i in active:
                self._backoff[i] -= k
            if k < m:
                self._admit_arrivals()
                continue
            return [i for i in active if self._backoff[i] == 0]

    def _attempt(self, i: int) -> None:
        params = self._params[i]
        stc = stc_for_dimension(params.stc_dimension or 2)
        real = sample_realization(
            self._positions, self.budget, max(1, self._n - 1), stc, self.rng
        )
        out = run_transaction(
            i,
            params,
            real,
            mode=self.mode,
            rng=self.rng,
            timings=self.timings,
            cache=self.cache,
            pdu_bytes=self.pdu_bytes,
        )
        self._log_emissions(out.emissions)
        m = self.metrics
        m.attempts += 1
        end = self.now_us + out.elapsed_us
        if out.success:
            m.successes += 1
            m.delivered_bits[i] += 8.0 * self.pdu_bytes
            m.delay_samples_us.append(end - self._hol[i])
            if self.trace:
                self.events.append((self.now_us, i, "success", params.scheme))
            self._complete(i, end)
        else:
            if out.aborted_handshake:
                m.handshake_aborts += 1
            if self.trace:
                self.events.append((self.now_us, i, "timeout", params.scheme))
            self._retry_or_drop(i, end)
        self.now_us = end

    def _collide(self, winners: list[int]) -> None:
        m = self.metrics
        m.collisions += 1
        outs = []
        for i in winners:
            out = run_transaction(
                i,
                self._params[i],
                self._dummy(),
                mode=self.mode,
                rng=self.rng,
                timings=self.timings,
                cache=self.cache,
                pdu_bytes=self.pdu_bytes,
                jammed=True,
            )
            self._log_emissions(out.emissions)
            outs.append(out)
            if self.trace:
                self.events.append((self.now_us, i, "collision", ""))
        busy_end = self.now_us + max(o.elapsed_us for o in outs)
        for i in winners:
            m.attempts += 1
            self._retry_or_drop(i, busy_end)
        self.now_us = busy_end

    def _complete(self, i: int, t: float) -> None:
        self._cw[i] = self.timings.cw_min
        self._retry[i] = 0
        if self._queue is None:
            self._hol[i] = t
            self._backoff[i] = self._draw(self._cw[i])
        else:
            self._queue[i].popleft()
            if self._queue[i]:
                self._hol[i] = t
                self._backoff[i] = self._draw(self._cw[i])

    def _retry_or_drop(self, i: int, t: float) -> None:
        self._retry[i] += 1
        if self._retry[i] > self.timings.retry_limit:
            self.metrics.drops += 1
            if self.trace:
                self.events.append((t, i, "drop", ""))
            self._complete(i, t)
        else:
            self._cw[i] = min(2 * self._cw[i] + 1, self.timings.cw_max)
            self._backoff[i] = self._draw(self._cw[i])

    def _dummy(self) -> ChannelRealization:
        if self._dummy_real is None or self._dummy_real.gains.shape[0] != self._n + 1:
            gains = np.zeros((self._n + 1, self._n + 1), dtype=complex)
            weights = np.zeros((max(1, self._n - 1), 4), dtype=complex)
            self._dummy_real = ChannelRealization(gains=gains, weight_matrix=weights)
        return self._dummy_real

    def _log_emissions(self, emissions: list[Emission]) -> None:
        by_kind = self.metrics.airtime_by_kind
        for e in emissions:
            by_kind[e.kind] = by_kind.get(e.kind, 0.0) + e.duration_us
            for s in e.senders:
                self._seg_airtime[self._n if s == AP_SENDER else s] += e.duration_us

    # -- main loop

    def run(self, duration_s: float) -> MacMetrics:
        if self.metrics is None:
            raise RuntimeError("configure() must be called before run()")
        t_end = self.now_us + float(duration_s) * 1e6
        while self.now_us < t_end:
            if not self._any_backlogged():
                nxt = self._next_arrival_time()
                if nxt >= t_end:
                    self.now_us = t_end
                    break
                self.now_us = nxt
                self._admit_arrivals()
                continue
            self.now_us += self.timings.difs_us
            self._admit_arrivals()
            winners = self._countdown()
            if len(winners) == 1:
                self._attempt(winners[0])
            else:
                self._collide(winners)
        self.metrics.duration_us = self.now_us
        self._flush_segment()
        return self.metrics


def dcf_engine(
    positions,
    params_list,
    duration_s: float,
    *,
    mode: str = "rts_on",
    traffic="saturated",
    seed=0,
    budget: LinkBudget | None = None,
    timings: MacTimings | None = None,
    cache: CodedPerCache | None = None,
    pdu_bytes: int = DATA_PDU_BYTES,
    trace: bool = False,
) -> MacMetrics:
    """One static-topology contention run; see MacSimulation for knobs."""
    sim = MacSimulation(
        mode=mode,
        traffic=traffic,
        budget=budget,
        timings=timings,
        seed=seed,
        cache=cache,
        pdu_bytes=pdu_bytes,
        trace=trace,
    )
    sim.configure(positions, params_list)
    return sim.run(duration_s)


# ---------------------------------------------------------------------------
# Off-cell interference accounting


def interference_probe(
    metrics: MacMetrics,
    probe_distances_m,
    *,
    budget: LinkBudget | None = None,
    azimuth_samples: int = 72,
) -> np.ndarray:
    """Mean received power on probe rings centred on the access point, in dBm.

    Each logged transmitter contributes its duty-cycle-weighted transmit
    power attenuated by the path-loss law; the transmit power is the one
    that calibrates the edge of the cell to the link budget's Es/N0 over
    the stated noise floor. Results are averaged in the power domain
    around each ring. Rings with no logged traffic report the floor.
    """
    budget = budget or LinkBudget()
    p_tx_mw = budget.edge_es_n0 * 10.0 ** (NOISE_FLOOR_DBM / 10.0)
    d_arr = np.atleast_1d(np.asarray(probe_distances_m, dtype=float))
    out = np.full(d_arr.shape, INTERFERENCE_FLOOR_DBM)
    total_us = float(metrics.duration_us)
    if total_us <= 0 or not metrics.tx_segments:
        return out
    theta = np.linspace(0.0, 2.0 * math.pi, azimuth_samples, endpoint=False)
    ring = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    for a, d in enumerate(d_arr):
        probes = d * ring
        acc = np.zeros(azimuth_samples)
        for pts, airtime in metrics.tx_segments:
            duty_mw = airtime * (p_tx_mw / total_us)
            dist = np.linalg.norm(probes[:, None, :] - pts[None, :, :], axis=-1)
            dist = np.maximum(dist, budget.min_distance_m)
            gain = (budget.cell_radius_m / dist) ** budget.path_loss_exponent
            acc += gain @ duty_mw
        mean_mw = float(acc.mean())
        if mean_mw > 0.0:
            out[a] = 10.0 * math.log10(mean_mw)
    return out


def write_event_trace(path, events) -> int:
    """Write (t_us, station, event, detail) rows to CSV; returns the row count."""
    n = 0
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_us", "station", "event", "detail"])
        for t, station, event, detail in events:
            writer.writerow([f"{t:.3f}", station, event, detail])
            n += 1
    return n
