"""MAC engine tests: airtimes, transaction schedules, contention, interference.

Hand-computed schedule sums serve as oracles for the frame sequencer
(perfect links make every decode succeed, so elapsed time is pure
arithmetic), and a renewal-process closed form pins the saturated
single-station throughput. Collision and timeout behavior is driven
through scripted contention states.
"""

import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopwlan.macsim import (
    AP_SENDER,
    FRAME_KINDS,
    INTERFERENCE_FLOOR_DBM,
    NOISE_FLOOR_DBM,
    OVERHEAD_KINDS,
    Emission,
    Frame,
    MacMetrics,
    MacSimulation,
    MacTimings,
    dcf_engine,
    frame_airtime,
    interference_probe,
    run_transaction,
    write_event_trace,
)
from coopwlan.phy import (
    RATE_TABLE,
    ChannelRealization,
    LinkBudget,
    mcs_for_rate,
    stc_for_dimension,
)
from coopwlan.per_engine import RelaySet
from coopwlan.rate_adapt import coop_params, direct_params, dstc_params, rdstc_params

R6 = mcs_for_rate(6)
R12 = mcs_for_rate(12)
R18 = mcs_for_rate(18)
R24 = mcs_for_rate(24)
R36 = mcs_for_rate(36)
R54 = mcs_for_rate(54)

SIFS = 16.0
DIFS = 34.0
GUARD = 9.0


def perfect_realization(n_stations: int, L: int = 2) -> ChannelRealization:
    """Gains so strong every decode succeeds with certainty."""
    gains = np.full((n_stations + 1, n_stations + 1), 1e6 + 0j)
    np.fill_diagonal(gains, 0.0)
    weights = np.ones((max(1, n_stations - 1), L), dtype=complex)
    return ChannelRealization(gains=gains, weight_matrix=weights)


def dead_realization(n_stations: int, L: int = 2) -> ChannelRealization:
    gains = np.zeros((n_stations + 1, n_stations + 1), dtype=complex)
    weights = np.zeros((max(1, n_stations - 1), L), dtype=complex)
    return ChannelRealization(gains=gains, weight_matrix=weights)


def rng_of(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# Airtime arithmetic


def test_airtime_examples():
    assert frame_airtime(Frame("RTS", 20, R6)) == 52.0
    assert frame_airtime(Frame("CTS", 14, R6)) == 44.0
    assert frame_airtime(Frame("ACK", 14, R6)) == 44.0
    assert frame_airtime(Frame("DATA_S", 1500, R54)) == 244.0
    # Service and tail bits alone still cost one symbol at 6 Mbps.
    assert frame_airtime(Frame("RTS", 0, R6)) == 20.0 + 4.0 * math.ceil(22 / 24)
    assert frame_airtime(Frame("HR", 22, R54)) == 24.0


def test_airtime_stc_inflation():
    # 1500 B at 18 Mbps: 12022 bits over 72-bit symbols is 167 symbols.
    assert frame_airtime(Frame("DATA_R", 1500, R18)) == 20.0 + 4.0 * 167
    # Full-rate code for two branches adds nothing.
    l2 = stc_for_dimension(2)
    assert frame_airtime(Frame("DATA_R", 1500, R18, l2)) == 20.0 + 4.0 * 167
    # Rate-3/4 designs stretch 167 symbols to ceil(167 / 0.75) = 223.
    for L in (3, 4):
        stc = stc_for_dimension(L)
        assert frame_airtime(Frame("DATA_R", 1500, R18, stc)) == 20.0 + 4.0 * 223
    assert frame_airtime(Frame("HTS", 14, R54, stc_for_dimension(3))) == 28.0


def test_frame_validation():
    with pytest.raises(ValueError, match="unknown frame kind"):
        Frame("BEACON", 10, R6)
    with pytest.raises(ValueError, match="negative"):
        Frame("RTS", -1, R6)


@settings(max_examples=60, deadline=None)
@given(
    n_bytes=st.integers(min_value=0, max_value=2000),
    rate=st.sampled_from(RATE_TABLE),
    L=st.sampled_from((2, 3, 4)),
)
def test_airtime_properties(n_bytes, rate, L):
    plain = frame_airtime(Frame("DATA_S", n_bytes, rate))
    assert plain >= 24.0
    assert (plain - 20.0) % 4.0 == 0.0
    assert frame_airtime(Frame("DATA_S", n_bytes + 1, rate)) >= plain
    assert frame_airtime(Frame("DATA_R", n_bytes, rate, stc_for_dimension(L))) >= plain


# ---------------------------------------------------------------------------
# Transaction schedules over perfect links (hand-summed oracles)


def test_perfect_direct_rts_on():
    out = run_transaction(0, direct_params(R54), perfect_realization(1), rng=rng_of(0))
    assert out.success and not out.aborted_handshake
    assert out.elapsed_us == 52 + SIFS + 44 + SIFS + 244 + SIFS + 44
    assert [e.kind for e in out.emissions] == ["RTS", "CTS", "DATA_S", "ACK"]
    assert out.emissions[1].senders == (AP_SENDER,)


def test_perfect_direct_rts_off():
    out = run_transaction(
        0, direct_params(R54), perfect_realization(1), mode="rts_off", rng=rng_of(0)
    )
    assert out.success
    assert out.elapsed_us == 244 + SIFS + 44
    assert [e.kind for e in out.emissions] == ["DATA_S", "ACK"]


def test_perfect_coopmac_rts_on():
    params = coop_params(R54, R54, relay=1)
    out = run_transaction(0, params, perfect_realization(2), rng=rng_of(0))
    assert out.success
    assert out.elapsed_us == 52 + 44 + 44 + 244 + 244 + 44 + 5 * SIFS
    kinds = [e.kind for e in out.emissions]
    assert kinds == ["RTS", "HTS", "CTS", "DATA_S", "DATA_R", "ACK"]
    assert out.emissions[4].senders == (1,)


def test_perfect_rdstc_rts_on():
    params = rdstc_params(R54, R54, 2)
    out = run_transaction(0, params, perfect_realization(4, L=2), rng=rng_of(0))
    assert out.success
    # RTS 52, recruitment 24, unison confirm 24, CTS 44, data 244 + 244, ACK 44.
    assert out.elapsed_us == 52 + 24 + 24 + 44 + 244 + 244 + 44 + 6 * SIFS
    kinds = [e.kind for e in out.emissions]
    assert kinds == ["RTS", "HR", "HTS", "CTS", "DATA_S", "DATA_R", "ACK"]
    # Every candidate decoded, so the unison frames carry all of them.
    assert out.emissions[2].senders == (1, 2, 3)
    assert out.emissions[5].senders == (1, 2, 3)


def test_perfect_rdstc_rts_off():
    params = rdstc_params(R54, R54, 2)
    out = run_transaction(
        0, params, perfect_realization(4, L=2), mode="rts_off", rng=rng_of(0)
    )
    assert out.success
    # The two-byte shim still fits the same 56-symbol data frame at 54 Mbps.
    assert out.elapsed_us == 244 + SIFS + 244 + SIFS + 44
    assert [e.kind for e in out.emissions] == ["DATA_S", "DATA_R", "ACK"]


def test_perfect_dstc_rts_on():
    params = dstc_params(R54, R54, RelaySet((1, 2)))
    out = run_transaction(0, params, perfect_realization(3, L=2), rng=rng_of(0))
    assert out.success
    # Named-relay recruitment (24 B), two confirmation slots, two pilot
    # slots, then the usual exchange: eight SIFS boundaries.
    assert out.elapsed_us == 52 + 24 + 18 + 18 + 24 + 44 + 244 + 244 + 44 + 8 * SIFS
    kinds = [e.kind for e in out.emissions]
    assert kinds == [
        "RTS",
        "HR",
        "RELAY_ACK",
        "RELAY_ACK",
        "PILOT",
        "PILOT",
        "HTS",
        "CTS",
        "DATA_S",
        "DATA_R",
        "ACK",
    ]
    assert out.emissions[2].duration_us == 9.0


def test_perfect_dstc_rts_off():
    params = dstc_params(R54, R54, RelaySet((1, 2)))
    out = run_transaction(
        0, params, perfect_realization(3, L=2), mode="rts_off", rng=rng_of(0)
    )
    assert out.success
    # Shim plus two relay-index bytes: 12054 bits still round to 56 symbols.
    assert out.elapsed_us == 244 + 18 + 244 + 44 + 3 * SIFS
    assert [e.kind for e in out.emissions] == ["DATA_S", "PILOT", "PILOT", "DATA_R", "ACK"]


# ---------------------------------------------------------------------------
# Timeouts, aborts, and collisions as one collider sees them


def test_jammed_direct_rts_on_times_out_at_cts_deadline():
    out = run_transaction(
        0, direct_params(R54), perfect_realization(1), rng=rng_of(0), jammed=True
    )
    assert not out.success and out.aborted_handshake
    assert out.elapsed_us == 52 + SIFS + 44 + GUARD
    assert [e.kind for e in out.emissions] == ["RTS"]


def test_jammed_direct_rts_off_burns_full_data_airtime():
    out = run_transaction(
        0,
        direct_params(R54),
        perfect_realization(1),
        mode="rts_off",
        rng=rng_of(0),
        jammed=True,
    )
    assert not out.success and not out.aborted_handshake
    assert out.elapsed_us == 244 + SIFS + 44 + GUARD
    assert [e.kind for e in out.emissions] == ["DATA_S"]


def test_jammed_rdstc_rts_on_schedule():
    params = rdstc_params(R54, R54, 2)
    out = run_transaction(
        0, params, perfect_realization(4, L=2), rng=rng_of(0), jammed=True
    )
    # Recruitment goes out unconditionally; the silent confirm window and
    # the CTS window still elapse before the timeout fires.
    assert out.elapsed_us == 52 + SIFS + 24 + SIFS + 24 + SIFS + 44 + GUARD
    assert [e.kind for e in out.emissions] == ["RTS", "HR"]
    assert not out.success and out.aborted_handshake


def test_dead_channel_equals_jammed_schedule():
    out = run_transaction(0, direct_params(R54), dead_realization(1), rng=rng_of(0))
    assert not out.success and out.aborted_handshake
    assert out.elapsed_us == 52 + SIFS + 44 + GUARD


def test_unison_confirm_failure_aborts_with_flag():
    # Recruits hear the source perfectly but the access point cannot hear
    # them back, so the confirmation dies and the handshake aborts.
    gains = np.zeros((4, 4), dtype=complex)
    gains[0, :] = 1e6
    gains[:, 0] = 1e6
    np.fill_diagonal(gains, 0.0)
    real = ChannelRealization(gains=gains, weight_matrix=np.ones((2, 2), complex))
    out = run_transaction(0, rdstc_params(R54, R54, 2), real, rng=rng_of(0))
    assert not out.success and out.aborted_handshake
    kinds = [e.kind for e in out.emissions]
    assert "HTS" in kinds and "CTS" not in kinds


def test_unknown_scheme_and_mode_rejected():
    with pytest.raises(ValueError, match="access mode"):
        run_transaction(
            0, direct_params(R54), perfect_realization(1), mode="csma", rng=rng_of(0)
        )


# ---------------------------------------------------------------------------
# Saturated contention: renewal oracle, collisions, retries


class _PerfectCache:
    """Decoder stub that never loses a frame."""

    def lookup_many(self, code_rate, pdu_bytes, ber):
        return np.zeros(np.asarray(ber, dtype=float).shape)


def near_field_sim(n, scheme_params, **kw):
    """Stations a few metres from the AP so every decode is near-certain."""
    angles = 2.0 * math.pi * np.arange(n) / max(n, 1)
    positions = 5.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    sim = MacSimulation(**kw)
    sim.configure(positions, scheme_params)
    return sim


def test_single_station_renewal_throughput():
    # One saturated station on a lossless channel: the medium cycles
    # DIFS, mean backoff of 7.5 slots, then a 432 us exchange. Payload
    # over cycle time gives the closed-form throughput; the only noise
    # left is the backoff draw, far inside one percent over ten seconds.
    sim = near_field_sim(1, [direct_params(R54)], seed=3, cache=_PerfectCache())
    metrics = sim.run(10.0)
    cycle = DIFS + 7.5 * 9.0 + (52 + SIFS + 44 + SIFS + 244 + SIFS + 44)
    closed_form = 8 * 1500 / cycle
    assert metrics.collisions == 0 and metrics.drops == 0
    assert metrics.successes == metrics.attempts
    assert abs(metrics.throughput_mbps() - closed_form) / closed_form < 0.01


def test_single_station_renewal_rts_off():
    sim = near_field_sim(
        1, [direct_params(R54)], mode="rts_off", seed=4, cache=_PerfectCache()
    )
    metrics = sim.run(10.0)
    closed_form = 8 * 1500 / (DIFS + 7.5 * 9.0 + (244 + SIFS + 44))
    assert abs(metrics.throughput_mbps() - closed_form) / closed_form < 0.01


def test_scripted_tie_collides_and_doubles_both_windows():
    sim = near_field_sim(2, [direct_params(R54)] * 2, seed=0)
    sim._backoff[:] = [0, 0]
    winners = sim._countdown()
    assert winners == [0, 1]
    sim._collide(winners)
    assert sim._cw == [31, 31]
    assert sim._retry == [1, 1]
    assert sim.metrics.collisions == 1 and sim.metrics.attempts == 2
    # Both opening frames hit the air and the colliders sat out the
    # response window: 52 + SIFS + CTS + guard.
    assert sim.metrics.airtime_by_kind["RTS"] == 2 * 52.0
    assert sim.now_us == 52 + SIFS + 44 + GUARD


def test_collision_without_reservation_costs_data_airtime():
    on = near_field_sim(2, [direct_params(R54)] * 2, seed=0)
    on._backoff[:] = [0, 0]
    on._collide(on._countdown())
    off = near_field_sim(2, [direct_params(R54)] * 2, mode="rts_off", seed=0)
    off._backoff[:] = [0, 0]
    off._collide(off._countdown())
    assert off.now_us == 244 + SIFS + 44 + GUARD
    assert off.now_us > on.now_us


def test_natural_collisions_and_recovery():
    sim = near_field_sim(8, [direct_params(R24)] * 8, seed=11)
    metrics = sim.run(0.5)
    assert metrics.collisions > 0
    assert metrics.successes > 0
    assert metrics.drops == 0
    assert len(metrics.delay_samples_us) == metrics.successes


def test_retry_limit_drops_and_leaves_no_delay_sample():
    positions = np.array([[100.0, 0.0]])
    sim = MacSimulation(seed=2)
    # 64-QAM at the cell edge cannot decode; every packet exhausts its
    # retries and is dropped without contributing a delay sample.
    sim.configure(positions, [direct_params(R54, compliant=False)])
    metrics = sim.run(0.5)
    assert metrics.successes == 0
    assert metrics.drops > 0
    assert metrics.delay_samples_us == []
    assert metrics.throughput_mbps() == 0.0


def test_delay_samples_floor_and_payload_accounting():
    sim = near_field_sim(4, [direct_params(R54)] * 4, seed=7)
    metrics = sim.run(1.0)
    # A delivery can never beat one full exchange.
    assert min(metrics.delay_samples_us) >= 432.0
    assert metrics.delivered_bits.sum() == 8 * 1500 * metrics.successes
    assert metrics.busy_airtime_us() <= metrics.duration_us


def test_airtime_kinds_are_known():
    params = [
        rdstc_params(R12, R12, 2),
        direct_params(R24),
        coop_params(R12, R12, relay=0),
    ]
    sim = near_field_sim(3, params, seed=5)
    metrics = sim.run(0.3)
    allowed = set(FRAME_KINDS) | set(OVERHEAD_KINDS)
    assert set(metrics.airtime_by_kind) <= allowed
    assert all(v > 0 for v in metrics.airtime_by_kind.values())


def test_same_seed_reproduces_run_exactly():
    def one(seed):
        params = [
            direct_params(R24),
            coop_params(R36, R36, relay=2),
            rdstc_params(R12, R12, 2),
            direct_params(R54),
        ]
        angles = np.array([0.2, 1.8, 3.1, 4.4])
        positions = np.stack([30 * np.cos(angles), 30 * np.sin(angles)], axis=1)
        sim = MacSimulation(seed=seed)
        sim.configure(positions, params)
        return sim.run(0.4)

    a, b, c = one(9), one(9), one(10)
    assert a.throughput_mbps() == b.throughput_mbps()
    assert a.delay_samples_us == b.delay_samples_us
    assert a.airtime_by_kind == b.airtime_by_kind
    assert a.attempts == b.attempts
    assert (a.attempts, a.delay_samples_us) != (c.attempts, c.delay_samples_us)


# ---------------------------------------------------------------------------
# Offered-load traffic


def test_light_offered_load_is_delivered():
    positions = np.array([[10.0, 0.0], [0.0, 10.0], [-10.0, 0.0]])
    sim = MacSimulation(traffic=1.2e6, seed=6)
    sim.configure(positions, [direct_params(R54)] * 3)
    metrics = sim.run(2.0)
    offered = 3 * 1.2e6 * 2.0
    assert offered * 0.95 <= metrics.delivered_bits.sum() <= offered
    # Far from saturation the queueing delay is negligible.
    assert metrics.mean_delay_ms() < 5.0


def test_idle_medium_advances_to_deadline():
    positions = np.array([[10.0, 0.0], [0.0, 10.0]])
    sim = MacSimulation(traffic=6000.0, seed=1)
    sim.configure(positions, [direct_params(R54)] * 2)
    metrics = sim.run(1.5)
    # Packets every two seconds per station: one early arrival each at
    # most, then silence until the deadline.
    assert metrics.attempts <= 4
    assert metrics.duration_us >= 1.5e6
    assert metrics.duration_us <= 1.5e6 + 5e3


# ---------------------------------------------------------------------------
# Engine lifecycle and validation


def test_configure_validation():
    sim = MacSimulation()
    with pytest.raises(RuntimeError, match="configure"):
        sim.run(0.1)
    with pytest.raises(ValueError, match="one parameter set per station"):
        sim.configure(np.zeros((2, 2)), [direct_params(R6)])
    with pytest.raises(ValueError, match="helper index"):
        sim.configure(np.zeros((2, 2)), [coop_params(R6, R6, relay=0), direct_params(R6)])
    with pytest.raises(ValueError, match="relay index"):
        sim.configure(
            np.zeros((2, 2)),
            [dstc_params(R6, R6, RelaySet((1, 5))), direct_params(R6)],
        )
    with pytest.raises(ValueError, match="candidate relay"):
        sim.configure(np.zeros((1, 2)), [rdstc_params(R6, R6, 2)])
    with pytest.raises(ValueError, match="offered load"):
        MacSimulation(traffic=-1.0)
    with pytest.raises(ValueError, match="access mode"):
        MacSimulation(mode="aloha")


def test_station_count_fixed_across_epochs():
    sim = near_field_sim(2, [direct_params(R54)] * 2, seed=0)
    sim.run(0.05)
    with pytest.raises(ValueError, match="station count"):
        sim.configure(np.zeros((3, 2)), [direct_params(R54)] * 3)


def test_epoch_reconfigure_keeps_metrics_and_segments():
    sim = near_field_sim(2, [direct_params(R54)] * 2, seed=8)
    sim.run(0.2)
    moved = np.array([[20.0, 5.0], [-15.0, 10.0]])
    sim.configure(moved, [direct_params(R36), direct_params(R36)])
    metrics = sim.run(0.2)
    assert metrics.duration_us >= 0.4e6
    assert len(metrics.tx_segments) >= 2
    assert metrics.successes > 0


def test_dcf_engine_wrapper_matches_manual_run():
    positions = np.array([[12.0, 0.0], [0.0, -9.0]])
    params = [direct_params(R54), direct_params(R54)]
    via_engine = dcf_engine(positions, params, 0.3, seed=21)
    sim = MacSimulation(seed=21)
    sim.configure(positions, params)
    manual = sim.run(0.3)
    assert via_engine.throughput_mbps() == manual.throughput_mbps()
    assert via_engine.attempts == manual.attempts


# ---------------------------------------------------------------------------
# Interference probe


def synthetic_metrics(position, airtime_us, total_us=1e6):
    pts = np.vstack([np.asarray(position, float).reshape(1, 2), [[0.0, 0.0]]])
    air = np.array([airtime_us, 0.0])
    return MacMetrics(
        n_stations=1,
        duration_us=total_us,
        delivered_bits=np.zeros(1),
        tx_segments=[(pts, air)],
    )


def test_probe_matches_ring_average_oracle():
    budget = LinkBudget()
    metrics = synthetic_metrics((50.0, 0.0), 2000.0)
    d = 200.0
    got = interference_probe(metrics, d, budget=budget, azimuth_samples=72)[0]
    p_tx = budget.edge_es_n0 * 10 ** (NOISE_FLOOR_DBM / 10)
    theta = np.linspace(0, 2 * math.pi, 72, endpoint=False)
    pts = d * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    dist = np.hypot(pts[:, 0] - 50.0, pts[:, 1])
    expect = 10 * math.log10(np.mean((100.0 / dist) ** 3) * p_tx * 2000.0 / 1e6)
    assert got == pytest.approx(expect, abs=1e-9)


def test_probe_far_field_point_approximation():
    budget = LinkBudget()
    metrics = synthetic_metrics((50.0, 0.0), 2000.0)
    got = interference_probe(metrics, 10_000.0, budget=budget)[0]
    p_tx = budget.edge_es_n0 * 10 ** (NOISE_FLOOR_DBM / 10)
    point = 10 * math.log10(p_tx * (100.0 / 10_000.0) ** 3 * 2000.0 / 1e6)
    assert got == pytest.approx(point, abs=0.05)


def test_probe_monotone_in_distance_and_airtime():
    m1 = synthetic_metrics((0.0, 0.0), 1000.0)
    levels = interference_probe(m1, [100.0, 150.0, 200.0, 300.0])
    assert np.all(np.diff(levels) < 0)
    m2 = synthetic_metrics((0.0, 0.0), 4000.0)
    assert interference_probe(m2, 150.0)[0] > interference_probe(m1, 150.0)[0]


def test_probe_floor_without_traffic():
    empty = MacMetrics(n_stations=1, duration_us=1e6, delivered_bits=np.zeros(1))
    assert interference_probe(empty, 200.0)[0] == INTERFERENCE_FLOOR_DBM


def test_probe_on_live_run_rises_above_floor():
    sim = near_field_sim(4, [direct_params(R54)] * 4, seed=14)
    metrics = sim.run(0.3)
    level = interference_probe(metrics, 150.0)[0]
    assert level > INTERFERENCE_FLOOR_DBM
    assert level < NOISE_FLOOR_DBM  # a 5 m cluster heard 150 m away is weak


# ---------------------------------------------------------------------------
# Event trace


def test_event_trace_round_trip(tmp_path):
    sim = near_field_sim(2, [direct_params(R54)] * 2, seed=3, trace=True)
    sim.run(0.05)
    assert sim.events
    path = tmp_path / "trace.csv"
    n = write_event_trace(path, sim.events)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t_us", "station", "event", "detail"]
    assert len(rows) == n + 1
    assert {r[2] for r in rows[1:]} <= {"success", "timeout", "collision", "drop"}
