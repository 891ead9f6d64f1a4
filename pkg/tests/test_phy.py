import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopwlan import phy
from _oracles import alamouti_bpsk_ber_mc, qam_symbol_errors_mc

BUDGET = phy.LinkBudget()


def test_rate_table_matches_80211g():
    pairs = {m.rate_mbps: (m.modulation_order, m.code_rate) for m in phy.RATE_TABLE}
    assert pairs[6] == (2, Fraction(1, 2))
    assert pairs[9] == (2, Fraction(3, 4))
    assert pairs[12] == (4, Fraction(1, 2))
    assert pairs[18] == (4, Fraction(3, 4))
    assert pairs[24] == (16, Fraction(1, 2))
    assert pairs[36] == (16, Fraction(3, 4))
    assert pairs[48] == (64, Fraction(2, 3))
    assert pairs[54] == (64, Fraction(3, 4))
    assert phy.BASE_RATE.rate_mbps == min(pairs)


def test_stc_code_rates():
    assert phy.stc_for_dimension(2).code_rate == 1
    assert phy.stc_for_dimension(3).code_rate == 0.75
    assert phy.stc_for_dimension(4).code_rate == 0.75


def test_q_eval_endpoints():
    assert phy.q_eval(0.0) == pytest.approx(0.5)
    assert phy.q_eval(8.0) < 1e-15


# Frozen from direct numerical integration of the standard normal tail
# (scipy.integrate.quad on exp(-t^2/2)/sqrt(2 pi)).
Q_ORACLE = [
    (0.5, 3.085375387259869e-01),
    (1.0, 1.586552539314571e-01),
    (2.0, 2.275013194817598e-02),
    (3.1623, 7.826410804946112e-04),
    (5.0, 2.866515703520398e-07),
    (8.0, 6.220960562461841e-16),
]


@pytest.mark.parametrize("x,expected", Q_ORACLE)
def test_q_eval_matches_integration_oracle(x, expected):
    assert phy.q_eval(x) == pytest.approx(expected, rel=1e-9)


@given(st.floats(min_value=0.0, max_value=8.0), st.floats(min_value=1e-6, max_value=1.0))
@settings(max_examples=50, deadline=None)
def test_q_eval_monotone_decreasing(x, dx):
    assert phy.q_eval(x + dx) < phy.q_eval(x)


def test_snr_at_calibration():
    assert phy.snr_at(100.0, BUDGET) == pytest.approx(1.4)
    assert phy.snr_at(50.0, BUDGET) == pytest.approx(11.2)
    assert phy.snr_at(25.0, BUDGET) == pytest.approx(89.6)


def test_snr_at_rejects_zero_distance():
    with pytest.raises(ValueError, match="degenerate distance"):
        phy.snr_at(0.0, BUDGET)


def test_mean_snr_clamps_below_one_metre():
    assert phy.mean_snr(0.01, BUDGET) == phy.mean_snr(1.0, BUDGET)
    np.testing.assert_allclose(phy.mean_snr([50.0, 100.0], BUDGET), [11.2, 1.4])


QPSK = phy.mcs_for_rate(12)
QAM16 = phy.mcs_for_rate(24)
QAM64 = phy.mcs_for_rate(54)


def test_ser_qpsk_zero_snr():
    # Q(0) = 0.5 per dimension, so 1 - 0.25
    assert phy.ser_square_qam(QPSK, 0.0) == pytest.approx(0.75)


# Frozen from the closed form evaluated with the integration oracle above.
def test_ser_frozen_values():
    assert phy.ser_square_qam(QPSK, 10.0) == pytest.approx(0.0015647896369451741, rel=1e-9)
    assert phy.ser_square_qam(QAM16, 20.0) == pytest.approx(0.06708586671129424, rel=1e-9)
    assert phy.ser_square_qam(QAM64, 50.0) == pytest.approx(0.20338987259235441, rel=1e-9)


@pytest.mark.parametrize("mcs", phy.RATE_TABLE, ids=lambda m: f"{m.rate_mbps}M")
def test_ser_monotone_in_snr(mcs):
    snr = np.logspace(-1, 4, 60)
    ser = phy.ser_square_qam(mcs, snr)
    diff = np.diff(ser)
    assert np.all(diff <= 0)
    # Strictly decreasing wherever the tail has not underflowed to zero.
    positive = ser[1:] > 0
    assert np.all(diff[positive] < 0)
    assert np.all((ser >= 0) & (ser < 1))


@pytest.mark.parametrize(
    "M,snr_db",
    [(2, 0), (4, 0), (4, 10), (16, 5), (16, 15), (64, 10)],
)
def test_ser_against_symbol_oracle(M, snr_db):
    snr = 10 ** (snr_db / 10)
    mcs = {2: phy.mcs_for_rate(6), 4: QPSK, 16: QAM16, 64: QAM64}[M]
    n = 200_000
    errors, total = qam_symbol_errors_mc(M, snr, n, seed=9000 + M + snr_db)
    p = float(phy.ser_square_qam(mcs, snr))
    se = math.sqrt(max(p * (1 - p), 1e-12) / total)
    assert abs(errors / total - p) <= 3 * se


def test_ber_from_ser_divides_by_bits_per_symbol():
    assert phy.ber_from_ser(QPSK, 1.57e-3) == pytest.approx(7.85e-4)
    assert phy.ber_from_ser(QAM16, 6.71e-2) == pytest.approx(1.6775e-2)
    assert phy.ber_from_ser(QAM64, 0.0) == 0.0


def test_ber_monotone_nonincreasing_in_snr():
    for mcs in phy.RATE_TABLE:
        snr = np.logspace(-2, 4, 80)
        ber = phy.ber_at_snr(mcs, snr)
        assert np.all(np.diff(ber) <= 0)


def test_equivalent_gain_single_relay_unit_weight():
    h = np.array([0.3 - 0.4j])
    r = np.array([[1.0, 0.0]])
    assert phy.rdstc_equivalent_gain(h, r) == pytest.approx(0.5)


def test_equivalent_gain_identity_is_plain_norm():
    h = np.array([1 + 0j, 0 + 1j, -2 + 0.5j])
    assert phy.rdstc_equivalent_gain(h, np.eye(3)) == pytest.approx(np.linalg.norm(h))


def test_equivalent_gain_matches_manual_product():
    rng = np.random.default_rng(5)
    h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    r = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
    manual = math.sqrt(sum(abs(sum(h[j] * r[j, l] for j in range(4))) ** 2 for l in range(2)))
    assert phy.rdstc_equivalent_gain(h, r) == pytest.approx(manual)


def test_equivalent_gain_shape_mismatch():
    with pytest.raises(ValueError):
        phy.rdstc_equivalent_gain(np.ones(3), np.ones((2, 2)))


def test_weight_normalization_preserves_mean_square_gain():
    # E ||h R||^2 = ||h||^2 because entries have variance 1/L.
    rng = np.random.default_rng(17)
    h = np.ones(6, dtype=complex)
    draws = 20_000
    vals = np.empty(draws)
    for i in range(draws):
        r = phy.draw_weights(6, 3, rng)
        vals[i] = np.linalg.norm(h @ r) ** 2
    assert np.mean(vals) == pytest.approx(6.0, rel=0.02)


def test_draw_fading_exponential_law():
    rng = np.random.default_rng(3)
    mean = phy.snr_at(40.0, BUDGET)
    h = phy.draw_fading(np.full(100_000, mean), rng)
    power = np.abs(h) ** 2
    assert np.mean(power) == pytest.approx(mean, rel=0.02)
    # Exponential: variance equals mean squared.
    assert np.var(power) == pytest.approx(mean**2, rel=0.05)


def test_draw_weights_variance():
    rng = np.random.default_rng(11)
    w = phy.draw_weights(100_000, 4, rng)
    assert np.mean(np.abs(w) ** 2) == pytest.approx(0.25, rel=0.02)
    assert abs(np.mean(w)) < 0.005


def test_sample_realization_deterministic():
    pos = np.array([[30.0, 0.0], [0.0, -70.0], [10.0, 10.0]])
    stc = phy.stc_for_dimension(2)
    a = phy.sample_realization(pos, BUDGET, 3, stc, rng=42)
    b = phy.sample_realization(pos, BUDGET, 3, stc, rng=42)
    np.testing.assert_array_equal(a.gains, b.gains)
    np.testing.assert_array_equal(a.weight_matrix, b.weight_matrix)
    assert a.ap_index == 3
    assert np.all(np.diag(a.gains) == 0)


def test_sample_realization_gain_statistics():
    pos = np.array([[50.0, 0.0]])
    stc = phy.stc_for_dimension(2)
    rng = np.random.default_rng(7)
    draws = np.empty(30_000)
    for i in range(draws.size):
        r = phy.sample_realization(pos, BUDGET, 1, stc, rng=rng)
        draws[i] = abs(r.gains[0, 1]) ** 2
    assert np.mean(draws) == pytest.approx(11.2, rel=0.03)


def test_alamouti_decode_matches_siso_formula_at_equivalent_gain():
    # Explicit two-relay space-time simulation against the closed form at
    # the equivalent channel norm; validates the orthogonality reduction.
    rng = np.random.default_rng(23)
    h = phy.draw_fading(np.full(3, 1.0), rng)
    r = phy.draw_weights(3, 2, rng)
    g = h @ r
    snr_eff = float(np.linalg.norm(g) ** 2)
    errors, total = alamouti_bpsk_ber_mc(g, n_blocks=400_000, seed=77)
    p = float(phy.q_eval(math.sqrt(2 * snr_eff)))
    se = math.sqrt(max(p * (1 - p), 1e-12) / total)
    assert abs(errors / total - p) <= 4 * se
