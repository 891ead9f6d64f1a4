"""Convolutional coding layer: encoder, Viterbi decoder, and packet-error
simulation with a persistent memo cache.

The code is the industry-standard constraint-length-7 code with generators
133/171 (octal), punctured to 2/3 and 3/4. Packet error rates against a
binary-symmetric channel are estimated by direct simulation (encode, flip
coded bits i.i.d., hard-decision Viterbi decode, compare payload), which
captures the burstiness of post-decoder errors that closed-form union
bounds miss at the operating points of interest.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from . import _viterbi
from .seeds import substream

__all__ = [
    "ConvCode",
    "PerEstimate",
    "CodedPerCache",
    "code_for_rate",
    "conv_encode",
    "viterbi_decode",
    "coded_length",
    "simulate_coded_per",
    "default_cache",
]

CONSTRAINT_LENGTH = 7
GENERATORS = (0o133, 0o171)
TAIL_BITS = CONSTRAINT_LENGTH - 1

# Puncturing keep-patterns for the two generator outputs, one flag pair per
# input bit position within the period.
_PUNCTURE = {
    Fraction(1, 2): ((1,), (1,)),
    Fraction(2, 3): ((1, 1), (1, 0)),
    Fraction(3, 4): ((1, 1, 0), (1, 0, 1)),
}


def _output_table() -> np.ndarray:
    """Coded output pair for each 7-bit window, packed as (a << 1) | b."""
    table = np.empty(128, dtype=np.uint8)
    for w in range(128):
        a = bin(w & GENERATORS[0]).count("1") & 1
        b = bin(w & GENERATORS[1]).count("1") & 1
        table[w] = (a << 1) | b
    return table


_OUT_PAIR = _output_table()


@dataclass(frozen=True)
class ConvCode:
    """A punctured convolutional code configuration."""

    code_rate: Fraction
    constraint_length: int = CONSTRAINT_LENGTH
    generators: tuple[int, int] = GENERATORS

    def __post_init__(self) -> None:
        if self.code_rate not in _PUNCTURE:
            raise ValueError(f"unsupported code rate {self.code_rate}")

    @property
    def puncture_pattern(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        return _PUNCTURE[self.code_rate]

    @property
    def keep_flags(self) -> tuple[np.ndarray, np.ndarray]:
        pa, pb = self.puncture_pattern
        return np.array(pa, dtype=np.uint8), np.array(pb, dtype=np.uint8)


_CODES = {rate: ConvCode(rate) for rate in _PUNCTURE}


def code_for_rate(code_rate: Fraction) -> ConvCode:
    """The standard code at the given rate (1/2, 2/3, or 3/4)."""
    try:
        return _CODES[Fraction(code_rate)]
    except KeyError:
        raise ValueError(f"unsupported code rate {code_rate}") from None


def coded_length(n_payload_bits: int, code: ConvCode) -> int:
    """Number of coded bits emitted for a payload of the given length."""
    keep_a, keep_b = code.keep_flags
    period = len(keep_a)
    per_period = int(keep_a.sum() + keep_b.sum())
    n_in = n_payload_bits + TAIL_BITS
    full, rem = divmod(n_in, period)
    extra = int(keep_a[:rem].sum() + keep_b[:rem].sum())
    return full * per_period + extra


def conv_encode(bits: np.ndarray, code: ConvCode) -> np.ndarray:
    """Encode payload bits, terminating with six tail zeros, and puncture."""
    data = np.ascontiguousarray(np.asarray(bits, dtype=np.uint8))
    if data.ndim != 1:
        raise ValueError("bits must be one-dimensional")
    keep_a, keep_b = code.keep_flags
    out = np.empty(coded_length(data.shape[0], code), dtype=np.uint8)
    n = _viterbi.encode_stream(data, TAIL_BITS, _OUT_PAIR, keep_a, keep_b, out)
    assert n == out.shape[0]
    return out


def _depuncture(coded: np.ndarray, code: ConvCode, n_in: int):
    """Spread a punctured stream back onto per-step (a, b) slots with masks."""
    keep_a, keep_b = code.keep_flags
    period = len(keep_a)
    rx_a = np.zeros(n_in, dtype=np.uint8)
    rx_b = np.zeros(n_in, dtype=np.uint8)
    mask_a = np.zeros(n_in, dtype=np.uint8)
    mask_b = np.zeros(n_in, dtype=np.uint8)
    pos = 0
    for i in range(n_in):
        j = i % period
        if keep_a[j]:
            rx_a[i] = coded[pos]
            mask_a[i] = 1
            pos += 1
        if keep_b[j]:
            rx_b[i] = coded[pos]
            mask_b[i] = 1
            pos += 1
    return rx_a, rx_b, mask_a, mask_b


def _payload_length(n_coded: int, code: ConvCode) -> int:
    """Invert coded_length; raises if no payload length produces n_coded."""
    keep_a, keep_b = code.keep_flags
    period = len(keep_a)
    per_period = int(keep_a.sum() + keep_b.sum())
    # coded_length is nondecreasing in the payload length, so bracket and scan.
    approx = max(0, (n_coded * period) // per_period - TAIL_BITS - period)
    for n in range(approx, approx + 2 * period + TAIL_BITS + 2):
        if coded_length(n, code) == n_coded:
            return n
    raise ValueError(f"coded stream of length {n_coded} does not match the code")


def viterbi_decode(bits: np.ndarray, code: ConvCode) -> np.ndarray:
    """Hard-decision maximum-likelihood decode; returns the payload bits."""
    coded = np.ascontiguousarray(np.asarray(bits, dtype=np.uint8))
    if coded.ndim != 1:
        raise ValueError("bits must be one-dimensional")
    n_payload = _payload_length(coded.shape[0], code)
    n_in = n_payload + TAIL_BITS
    rx_a, rx_b, mask_a, mask_b = _depuncture(coded, code, n_in)
    decisions = np.empty((n_in, 64), dtype=np.uint8)
    decoded = np.empty(n_in, dtype=np.uint8)
    _viterbi.viterbi(rx_a, rx_b, mask_a, mask_b, _OUT_PAIR, decisions, decoded)
    return decoded[:n_payload]


@dataclass(frozen=True)
class PerEstimate:
    """A Monte-Carlo packet-error-rate estimate with its precision."""

    per: float
    trials: int
    half_width_95: float

    @staticmethod
    def from_counts(failures: int, trials: int) -> "PerEstimate":
        p = failures / trials
        hw = 1.96 * math.sqrt(p * (1.0 - p) / trials)
        return PerEstimate(per=p, trials=trials, half_width_95=hw)


# Adaptive stopping: keep simulating until the 95% half-width is within
# 10% of the estimate (absolute floor 0.002) or the trial cap is reached.
_MIN_TRIALS = 256
_MAX_TRIALS = 100_000
_FIRST_CHUNK = 64


def _stop_ok(failures: int, trials: int) -> bool:
    est = PerEstimate.from_counts(failures, trials)
    return est.half_width_95 <= max(0.1 * est.per, 0.002)


def simulate_coded_per(
    mcs,
    channel_ber: float,
    pdu_bytes: int,
    trials: int | None = None,
    seed: int | np.random.Generator = 0,
) -> PerEstimate:
    """Estimate the packet error rate of a coded PDU over a BSC.

    Each trial draws a random payload, encodes it, flips each coded bit
    independently with probability channel_ber, decodes, and scores the
    payload. With trials=None the loop stops adaptively once the estimate
    is tight (or at the trial cap). `mcs` may be a full transmission-rate
    entry or a bare code rate; only the code rate enters here, since the
    modulation is already folded into channel_ber.
    """
    code_rate = Fraction(getattr(mcs, "code_rate", mcs))
    code = code_for_rate(code_rate)
    if not 0.0 <= channel_ber <= 1.0:
        raise ValueError(f"channel_ber {channel_ber} out of [0, 1]")
    if pdu_bytes <= 0:
        raise ValueError("pdu_bytes must be positive")
    n_payload = 8 * pdu_bytes
    n_coded = coded_length(n_payload, code)
    if channel_ber == 0.0:
        return PerEstimate(per=0.0, trials=0, half_width_95=0.0)
    rng = seed if isinstance(seed, np.random.Generator) else substream(seed, "coded-per")
    keep_a, keep_b = code.keep_flags
    fixed_budget = trials is not None
    budget = trials if fixed_budget else _MAX_TRIALS
    if budget <= 0:
        raise ValueError("trials must be positive")
    failures = 0
    done = 0
    chunk = min(_FIRST_CHUNK, budget)
    while done < budget:
        chunk = min(chunk, budget - done)
        data = (rng.random((chunk, n_payload)) < 0.5).astype(np.uint8)
        flips = (rng.random((chunk, n_coded)) < channel_ber).astype(np.uint8)
        got = _viterbi.count_packet_failures(data, flips, TAIL_BITS, _OUT_PAIR, keep_a, keep_b)
        assert got >= 0
        failures += got
        done += chunk
        if not fixed_budget and done >= _MIN_TRIALS and _stop_ok(failures, done):
            break
        chunk = min(2 * chunk, 1024)
    return PerEstimate.from_counts(failures, done)


# ---------------------------------------------------------------------------
# Memo cache on a logarithmic BER grid


_CACHE_FORMAT = "coded-per-cache"
_CACHE_VERSION = 1
_CACHE_SEED_ROOT = 0x5EED_CAC4E % (1 << 63)
_POINTS_PER_DECADE = 64
_GRID_MIN_BER = 1e-5


class CodedPerCache:
    """Lazily filled PER lookup on a log-spaced BER grid.

    Queries snap to grid points at 64 per decade; missing points are
    simulated on demand with a seed derived from the grid key alone, so
    the stored values are identical no matter which process fills them or
    in what order. Interpolation between neighbouring points is linear in
    log-log space (linear in probability when an endpoint is zero).
    """

    def __init__(self, points_per_decade: int = _POINTS_PER_DECADE):
        self.points_per_decade = points_per_decade
        self._entries: dict[tuple[int, int, int, int], PerEstimate] = {}
        # Highest grid index per (num, den, pdu) curve whose stored PER is
        # zero: everything below it is zero too, by monotonicity in BER.
        self._zero_k: dict[tuple[int, int, int], int] = {}
        self._lock = threading.Lock()

    def _note_zero(self, key: tuple[int, int, int, int], est: PerEstimate) -> None:
        if est.per == 0.0:
            curve = key[:3]
            if self._zero_k.get(curve, -(1 << 30)) < key[3]:
                self._zero_k[curve] = key[3]

    # -- grid geometry

    def _grid_ber(self, k: int) -> float:
        return 10.0 ** (k / self.points_per_decade)

    # -- entry computation

    def _entry(self, code_rate: Fraction, pdu_bytes: int, k: int) -> PerEstimate:
        key = (code_rate.numerator, code_rate.denominator, pdu_bytes, k)
        with self._lock:
            hit = self._entries.get(key)
            if hit is None and k <= self._zero_k.get(key[:3], -(1 << 30)):
                hit = PerEstimate(0.0, 0, 0.0)
        if hit is not None:
            return hit
        rng = substream(_CACHE_SEED_ROOT, "per-grid", *key)
        est = simulate_coded_per(code_rate, self._grid_ber(k), pdu_bytes, seed=rng)
        with self._lock:
            self._entries.setdefault(key, est)
            self._note_zero(key, est)
        return est

    # -- queries

    def lookup(self, code_rate: Fraction, pdu_bytes: int, channel_ber: float) -> float:
        """PER at the given BER, interpolated from the grid."""
        return float(self.lookup_many(code_rate, pdu_bytes, np.array([channel_ber]))[0])

    def lookup_many(
        self, code_rate: Fraction, pdu_bytes: int, channel_ber: np.ndarray
    ) -> np.ndarray:
        code_rate = Fraction(code_rate)
        ber = np.asarray(channel_ber, dtype=float)
        flat = ber.ravel()
        out = np.zeros(flat.shape[0], dtype=float)
        k_max = math.floor(self.points_per_decade * math.log10(0.5)) + 1
        # Far below the waterfall the decoder is effectively perfect.
        live = flat > _GRID_MIN_BER
        if live.any():
            b = np.minimum(flat[live], self._grid_ber(k_max))
            x = self.points_per_decade * np.log10(b)
            lo = np.floor(x).astype(np.int64)
            hi = np.minimum(lo + 1, k_max)
            lo = np.minimum(lo, hi)
            frac = x - lo
            needed = np.unique(np.concatenate([lo, hi]))
            vals = np.array(
                [self._entry(code_rate, pdu_bytes, int(k)).per for k in needed]
            )
            p_lo = vals[np.searchsorted(needed, lo)]
            p_hi = vals[np.searchsorted(needed, hi)]
            both_pos = (p_lo > 0.0) & (p_hi > 0.0)
            geo = 10.0 ** (
                (1.0 - frac) * np.log10(np.where(both_pos, p_lo, 1.0))
                + frac * np.log10(np.where(both_pos, p_hi, 1.0))
            )
            out[live] = np.where(both_pos, geo, (1.0 - frac) * p_lo + frac * p_hi)
        return out.reshape(ber.shape)

    # -- persistence

    def save(self, path: str | Path) -> None:
        with self._lock:
            rows = [
                [*key, est.per, est.trials, est.half_width_95]
                for key, est in sorted(self._entries.items())
            ]
        doc = {
            "format": _CACHE_FORMAT,
            "version": _CACHE_VERSION,
            "constraint_length": CONSTRAINT_LENGTH,
            "generators": list(GENERATORS),
            "points_per_decade": self.points_per_decade,
            "entries": rows,
        }
        Path(path).write_text(json.dumps(doc))

    def load(self, path: str | Path) -> int:
        """Merge entries from a saved cache file; returns how many loaded."""
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != _CACHE_FORMAT or doc.get("version") != _CACHE_VERSION:
            raise ValueError(f"unrecognized cache file {path}")
        if doc.get("points_per_decade") != self.points_per_decade:
            raise ValueError("cache grid resolution mismatch")
        if tuple(doc.get("generators", ())) != GENERATORS:
            raise ValueError("cache code mismatch")
        n = 0
        with self._lock:
            for num, den, pdu_bytes, k, per, trials, hw in doc["entries"]:
                key = (int(num), int(den), int(pdu_bytes), int(k))
                est = PerEstimate(float(per), int(trials), float(hw))
                self._entries.setdefault(key, est)
                self._note_zero(key, est)
                n += 1
        return n


_DEFAULT_CACHE: CodedPerCache | None = None


def default_cache() -> CodedPerCache:
    """The process-wide cache, seeded from the packaged data file if present."""
    global _DEFAULT_CACHE
    if _DEFAULT_CACHE is None:
        cache = CodedPerCache()
        try:
            data = resources.files("coopwlan").joinpath("data/per_cache.json")
            if data.is_file():
                cache.load(str(data))
        except (OSError, ValueError):
            pass
        _DEFAULT_CACHE = cache
    return _DEFAULT_CACHE
