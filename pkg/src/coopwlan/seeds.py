"""Deterministic random-stream derivation.

Every stochastic component draws from a Generator obtained through
substream(), so that any (root seed, label path) pair maps to the same
stream no matter in which order or in which process the streams are
created. That property is what makes reruns bit-exact and lets
independent simulation jobs run in parallel without sharing state.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _word(label) -> int:
    # Stable 64-bit word per label; ints pass through, strings are hashed.
    if isinstance(label, (bool, float)):
        label = repr(label)
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.blake2b(str(label).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def seed_sequence(root: int, *labels) -> np.random.SeedSequence:
    """SeedSequence for the given root seed and label path."""
    return np.random.SeedSequence([_word(root)] + [_word(x) for x in labels])


def substream(root: int, *labels) -> np.random.Generator:
    """Independent PCG64 stream addressed by (root, *labels)."""
    return np.random.default_rng(seed_sequence(root, *labels))
