"""Counter-based random streams.

Every draw is a pure function of ``(seed, labels, cell index)``: a Philox key is
derived from the seed and labels, and cell ``n`` reads a fixed block of the
counter space. Overlapping index ranges therefore agree cellwise no matter
how the range is split or which worker produces it.
"""
from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1
# shifts cell indices so that negative cells map to distinct counter blocks
_CELL_OFFSET = 1 << 62
_WORDS_PER_BLOCK = 4


def _label_int(label):
    if isinstance(label, (int, np.integer)):
        return int(label) & _MASK64
    digest = hashlib.blake2b(str(label).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream_key(seed, *labels):
    """Two-word Philox key for ``seed`` refined by arbitrary labels."""
    entropy = [int(seed) & _MASK64] + [_label_int(x) for x in labels]
    return np.random.SeedSequence(entropy).generate_state(2, np.uint64)


def derive_seed(seed, *labels):
    """A 64-bit child seed; used for the per-task fan-out of a master seed."""
    entropy = [int(seed) & _MASK64] + [_label_int(x) for x in labels]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


def raw_words(key, start, stop, width):
    """Raw 64-bit words for cells ``start..stop-1``, ``width`` words per cell."""
    if stop < start:
        raise ValueError("stop must be >= start")
    blocks = -(-width // _WORDS_PER_BLOCK)
    count = stop - start
    gen = np.random.Philox(key=key)
    gen.advance((start + _CELL_OFFSET) * blocks)
    words = gen.random_raw(count * blocks * _WORDS_PER_BLOCK)
    return words.reshape(count, blocks * _WORDS_PER_BLOCK)[:, :width]


def cell_uniforms(key, start, stop, width):
    """Uniform floats in [0, 1) with 53 random bits, shape ``(stop-start, width)``."""
    w = raw_words(key, start, stop, width)
    return (w >> np.uint64(11)).astype(np.float64) * 2.0**-53


def categorical(u, weights):
    """Map uniforms to indices of a finite law with the given weights."""
    cum = np.cumsum(np.asarray(weights, dtype=float))
    cum /= cum[-1]
    cum[-1] = 1.0
    return np.searchsorted(cum, u, side="right")


def trial_generator(seed, *labels):
    """A numpy Generator for auxiliary draws (initial data, sample points)."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, "aux", *labels)))
