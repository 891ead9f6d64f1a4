"""Channel model and symbol-level error-rate formulas.

The cell is a disk with the access point at the origin. Mean received
symbol SNR follows a log-distance law calibrated so that a station at
the cell edge sees Es/N0 = 1.4 (linear). Fading is block Rayleigh: one
complex gain per link per MAC transaction, with |h|^2 exponential around
the path-loss mean. Complex gains are scaled so that |h|^2 *is* the
instantaneous received SNR, which lets every error formula take a gain
magnitude directly.

Second hop of the cooperative schemes: relays transmit random linear
combinations (weights of variance 1/L) of the L space-time streams, so
the destination sees an equivalent 1xL channel h R. By orthogonality of
the underlying code, the post-combining SNR is ||h R||^2 and the SISO
error formulas apply with that norm in place of |h|. Plain DSTC is the
R = identity special case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import erfc

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class Mcs:
    """One PHY rate: data rate, modulation order, convolutional code rate."""

    rate_mbps: int
    modulation_order: int
    code_rate: Fraction

    def __post_init__(self):
        if self.modulation_order not in (2, 4, 16, 64):
            raise ValueError(f"unsupported modulation order {self.modulation_order}")

    @property
    def bits_per_modulation_symbol(self) -> int:
        return int(math.log2(self.modulation_order))


# 802.11g OFDM rate set (rate; modulation; code rate).
RATE_TABLE: tuple[Mcs, ...] = (
    Mcs(6, 2, Fraction(1, 2)),
    Mcs(9, 2, Fraction(3, 4)),
    Mcs(12, 4, Fraction(1, 2)),
    Mcs(18, 4, Fraction(3, 4)),
    Mcs(24, 16, Fraction(1, 2)),
    Mcs(36, 16, Fraction(3, 4)),
    Mcs(48, 64, Fraction(2, 3)),
    Mcs(54, 64, Fraction(3, 4)),
)

BASE_RATE: Mcs = RATE_TABLE[0]

_BY_RATE = {m.rate_mbps: m for m in RATE_TABLE}


def mcs_for_rate(rate_mbps: int) -> Mcs:
    return _BY_RATE[rate_mbps]


@dataclass(frozen=True)
class StcCode:
    """Orthogonal space-time code: dimension L, block length K, code rate R_c."""

    dimension: int
    code_rate: Fraction
    block_length: int

    def __post_init__(self):
        if self.dimension not in (2, 3, 4):
            raise ValueError(f"unsupported STC dimension {self.dimension}")


# Alamouti for L = 2 (full rate); rate-3/4 orthogonal designs for L = 3, 4.
STC_TABLE = {
    2: StcCode(2, Fraction(1), 2),
    3: StcCode(3, Fraction(3, 4), 4),
    4: StcCode(4, Fraction(3, 4), 4),
}


def stc_for_dimension(L: int) -> StcCode:
    return STC_TABLE[L]


@dataclass(frozen=True)
class LinkBudget:
    """Calibration of the log-distance path-loss law."""

    edge_es_n0: float = 1.4
    path_loss_exponent: float = 3.0
    cell_radius_m: float = 100.0
    min_distance_m: float = 1.0

    def __post_init__(self):
        if self.edge_es_n0 <= 0 or self.path_loss_exponent <= 0 or self.cell_radius_m <= 0:
            raise ValueError("link budget parameters must be strictly positive")


def q_eval(x):
    """Gaussian tail probability Q(x), accurate into the deep tail."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / _SQRT2)


def snr_at(distance_m: float, budget: LinkBudget) -> float:
    """Mean received Es/N0 (linear) at the given distance from a transmitter."""
    if np.any(np.asarray(distance_m) <= 0):
        raise ValueError("degenerate distance")
    return budget.edge_es_n0 * (budget.cell_radius_m / distance_m) ** budget.path_loss_exponent


def mean_snr(distance_m, budget: LinkBudget):
    """snr_at with the sub-metre clamp applied; accepts arrays."""
    d = np.maximum(np.asarray(distance_m, dtype=float), budget.min_distance_m)
    return budget.edge_es_n0 * (budget.cell_radius_m / d) ** budget.path_loss_exponent


def ser_square_qam(mcs: Mcs, instantaneous_snr):
    """Symbol error rate of M-QAM at the given instantaneous SNR.

    Square constellations use the two-dimensional PAM construction
    P_s = 1 - (1 - P_sqrtM)^2 with
    P_sqrtM = 2 (1 - 1/sqrt(M)) Q(sqrt(3 snr / (M - 1))).
    BPSK is not square; there the bit and symbol error rates coincide at
    Q(sqrt(2 snr)).
    """
    snr = np.asarray(instantaneous_snr, dtype=float)
    M = mcs.modulation_order
    if M == 2:
        return q_eval(np.sqrt(2.0 * snr))
    sqrt_m = math.sqrt(M)
    p_pam = 2.0 * (1.0 - 1.0 / sqrt_m) * q_eval(np.sqrt(3.0 * snr / (M - 1)))
    return 1.0 - (1.0 - p_pam) ** 2


def ber_from_ser(mcs: Mcs, ser):
    """Gray-coding approximation: bit errors spread over log2(M) bits."""
    return np.asarray(ser, dtype=float) / mcs.bits_per_modulation_symbol


def ber_at_snr(mcs: Mcs, instantaneous_snr):
    """Instantaneous channel BER feeding the coded-PER pipeline."""
    return ber_from_ser(mcs, ser_square_qam(mcs, instantaneous_snr))


def rdstc_equivalent_gain(second_hop_gains: np.ndarray, weights: np.ndarray) -> float:
    """Norm of the equivalent second-hop channel h R seen by the destination.

    second_hop_gains is the length-n vector of relay-to-destination gains,
    weights the n x L combining matrix. Substituting the returned norm for
    |h| in the SISO formulas gives the space-time coded error rate; with
    weights = identity this degenerates to ||h|| (plain DSTC).
    """
    h = np.asarray(second_hop_gains)
    r = np.asarray(weights)
    if h.ndim != 1 or r.ndim != 2 or r.shape[0] != h.shape[0]:
        raise ValueError(f"shape mismatch: gains {h.shape} vs weights {r.shape}")
    return float(np.linalg.norm(h @ r))


def draw_fading(mean_snr_values, rng: np.random.Generator) -> np.ndarray:
    """Complex link gains scaled so |h|^2 ~ Exponential(mean = mean snr)."""
    mean = np.asarray(mean_snr_values, dtype=float)
    shape = mean.shape
    z = rng.standard_normal(shape + (2,))
    h = (z[..., 0] + 1j * z[..., 1]) / _SQRT2
    return np.sqrt(mean) * h


def draw_weights(n: int, L: int, rng: np.random.Generator) -> np.ndarray:
    """n x L random combining matrix, i.i.d. complex entries of variance 1/L."""
    z = rng.standard_normal((n, L, 2))
    return (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2.0 * L)


@dataclass
class ChannelRealization:
    """One block-fading draw for a whole transaction.

    gains[i, j] is the instantaneous complex gain from station i to
    station j, with the access point stored as the last index; the
    diagonal is zero. weight_matrix is the n x L combining matrix for the
    second hop of this transaction.
    """

    gains: np.ndarray
    weight_matrix: np.ndarray
    ap_index: int = field(default=-1)

    def __post_init__(self):
        if self.ap_index < 0:
            self.ap_index = self.gains.shape[0] - 1


def sample_realization(
    positions: np.ndarray,
    budget: LinkBudget,
    relay_count: int,
    stc: StcCode,
    rng,
) -> ChannelRealization:
    """Draw gains for every ordered station/AP pair plus a weight matrix.

    positions is an (N, 2) array of station coordinates with the AP at the
    origin; the realization indexes stations 0..N-1 and the AP as N.
    Deterministic for a given seed or Generator.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    pts = np.vstack([pos, [[0.0, 0.0]]])
    n = pts.shape[0]
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    mean = mean_snr(dist, budget)
    gains = draw_fading(mean, rng)
    np.fill_diagonal(gains, 0.0)
    weights = draw_weights(relay_count, stc.dimension, rng)
    return ChannelRealization(gains=gains, weight_matrix=weights, ap_index=n - 1)
