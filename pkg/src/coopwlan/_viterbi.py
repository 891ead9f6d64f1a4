"""Numba kernels for the convolutional code hot path.

State convention: the 6-bit state holds the most recent input bit at bit
position 5. A trellis step consumes input bit b through the 7-bit window
w = (b << 6) | state and moves to state w >> 1, so for a successor state
s the two candidate windows are (s << 1) | x with x the bit falling out
of the register, and the consumed input bit is s >> 5.
"""

from __future__ import annotations

import numpy as np
from numba import njit

INF = 1 << 28


@njit(cache=True)
def encode_stream(data, tail, out_pair, keep_a, keep_b, coded):
    """Encode data+tail and emit punctured coded bits; returns coded length."""
    n = data.shape[0]
    period = keep_a.shape[0]
    state = 0
    pos = 0
    for i in range(n + tail):
        bit = data[i] if i < n else 0
        w = (bit << 6) | state
        pair = out_pair[w]
        j = i % period
        if keep_a[j]:
            coded[pos] = (pair >> 1) & 1
            pos += 1
        if keep_b[j]:
            coded[pos] = pair & 1
            pos += 1
        state = w >> 1
    return pos


@njit(cache=True)
def viterbi(rx_a, rx_b, mask_a, mask_b, out_pair, decisions, decoded):
    """Hard-decision Viterbi over a zero-terminated trellis.

    rx_*/mask_* are per-step received bits and presence flags (punctured
    positions carry mask 0). Writes the decoded input bits, including the
    tail, into `decoded`.
    """
    n = rx_a.shape[0]
    metric = np.empty(64, np.int32)
    new_metric = np.empty(64, np.int32)
    cost = np.empty(4, np.int32)
    for s in range(64):
        metric[s] = INF
    metric[0] = 0
    for t in range(n):
        ra = rx_a[t]
        rb = rx_b[t]
        ma = mask_a[t]
        mb = mask_b[t]
        for p in range(4):
            c = 0
            if ma and ((p >> 1) & 1) != ra:
                c += 1
            if mb and (p & 1) != rb:
                c += 1
            cost[p] = c
        for s in range(64):
            w0 = s << 1
            w1 = w0 | 1
            m0 = metric[w0 & 63] + cost[out_pair[w0]]
            m1 = metric[w1 & 63] + cost[out_pair[w1]]
            if m1 < m0:
                new_metric[s] = m1
                decisions[t, s] = 1
            else:
                new_metric[s] = m0
                decisions[t, s] = 0
        for s in range(64):
            metric[s] = new_metric[s]
    # Tail bits terminate the encoder, so the path ends in state 0.
    s = 0
    for t in range(n - 1, -1, -1):
        decoded[t] = s >> 5
        s = ((s & 31) << 1) | decisions[t, s]


@njit(cache=True)
def count_packet_failures(data, flips, tail, out_pair, keep_a, keep_b):
    """Encode, inject the given bit flips, decode, count payload failures.

    data: (T, n_payload) payload bits per trial; flips: (T, n_coded) XOR
    pattern applied to the coded stream. Returns the number of trials in
    which any payload bit decoded wrong (tail bits are not counted).
    """
    trials, n_payload = data.shape
    period = keep_a.shape[0]
    n_in = n_payload + tail
    n_coded = flips.shape[1]
    rx_a = np.empty(n_in, np.uint8)
    rx_b = np.empty(n_in, np.uint8)
    mask_a = np.empty(n_in, np.uint8)
    mask_b = np.empty(n_in, np.uint8)
    metric = np.empty(64, np.int32)
    new_metric = np.empty(64, np.int32)
    cost = np.empty(4, np.int32)
    decisions = np.empty((n_in, 64), np.uint8)
    failures = 0
    for trial in range(trials):
        state = 0
        pos = 0
        for i in range(n_in):
            bit = data[trial, i] if i < n_payload else 0
            w = (bit << 6) | state
            pair = out_pair[w]
            j = i % period
            if keep_a[j]:
                rx_a[i] = ((pair >> 1) & 1) ^ flips[trial, pos]
                mask_a[i] = 1
                pos += 1
            else:
                rx_a[i] = 0
                mask_a[i] = 0
            if keep_b[j]:
                rx_b[i] = (pair & 1) ^ flips[trial, pos]
                mask_b[i] = 1
                pos += 1
            else:
                rx_b[i] = 0
                mask_b[i] = 0
            state = w >> 1
        if pos != n_coded:
            # Caller sized the flip matrix wrong; treat as a hard error.
            return -1
        for s in range(64):
            metric[s] = INF
        metric[0] = 0
        for t in range(n_in):
            ra = rx_a[t]
            rb = rx_b[t]
            ma = mask_a[t]
            mb = mask_b[t]
            for p in range(4):
                c = 0
                if ma and ((p >> 1) & 1) != ra:
                    c += 1
                if mb and (p & 1) != rb:
                    c += 1
                cost[p] = c
            for s in range(64):
                w0 = s << 1
                w1 = w0 | 1
                m0 = metric[w0 & 63] + cost[out_pair[w0]]
                m1 = metric[w1 & 63] + cost[out_pair[w1]]
                if m1 < m0:
                    new_metric[s] = m1
                    decisions[t, s] = 1
                else:
                    new_metric[s] = m0
                    decisions[t, s] = 0
            for s in range(64):
                metric[s] = new_metric[s]
        s = 0
        bad = 0
        for t in range(n_in - 1, -1, -1):
            if t < n_payload and (s >> 5) != data[trial, t]:
                bad = 1
                break
            s = ((s & 31) << 1) | decisions[t, s]
        failures += bad
    return failures
