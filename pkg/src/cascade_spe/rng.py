"""Counter-based random numbers (Philox4x32-10).

Every draw is a pure function of ``(seed, counter)``, so any subset of pulses
can be generated in any order, by any number of workers, and give the same
numbers. The simulator addresses draws with counters of the form
``(pulse_index, stream, block)`` where ``stream`` selects an emitter or a
background channel and ``block`` selects a group of four 32-bit words.
"""

from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)

ROUNDS = 10


def philox4x32(counter, key, rounds: int = ROUNDS) -> np.ndarray:
    """Apply the Philox4x32 bijection.

    Parameters
    ----------
    counter : array_like of uint32, shape (4, n) or (4,)
    key : pair of uint32
    rounds : int
        Number of rounds (10 is the standard, crush-resistant choice).

    Returns
    -------
    ndarray of uint32 with the same shape as ``counter``.
    """
    ctr = np.asarray(counter, dtype=np.uint64)
    scalar = ctr.ndim == 1
    if scalar:
        ctr = ctr[:, None]
    c0, c1, c2, c3 = (ctr[i].copy() for i in range(4))
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _SHIFT32, p0 & _MASK32
        hi1, lo1 = p1 >> _SHIFT32, p1 & _MASK32
        c0 = hi1 ^ c1 ^ np.uint64(k0)
        c1 = lo1
        c2 = hi0 ^ c3 ^ np.uint64(k1)
        c3 = lo0
    out = np.stack([c0, c1, c2, c3]).astype(np.uint32)
    return out[:, 0] if scalar else out


def seed_to_key(seed: int) -> tuple[int, int]:
    """Split a 64-bit seed into the two 32-bit key words."""
    if seed < 0 or seed >= 1 << 64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    return seed & 0xFFFFFFFF, seed >> 32


def make_counters(pulse_index, stream, block) -> np.ndarray:
    """Build a (4, n) counter array from broadcastable index arrays."""
    pulse_index, stream, block = np.broadcast_arrays(
        np.asarray(pulse_index, dtype=np.int64),
        np.asarray(stream, dtype=np.int64),
        np.asarray(block, dtype=np.int64),
    )
    p = pulse_index.astype(np.uint64).ravel()
    return np.stack([
        p & _MASK32,
        p >> _SHIFT32,
        stream.astype(np.uint64).ravel() & _MASK32,
        block.astype(np.uint64).ravel() & _MASK32,
    ])


def to_unit(words: np.ndarray) -> np.ndarray:
    """Map uint32 words to doubles strictly inside (0, 1)."""
    return (words.astype(np.float64) + 0.5) * 2.0**-32


def uniforms(seed: int, pulse_index, stream, block) -> np.ndarray:
    """Four open-interval uniforms per counter, shape (4, n)."""
    return to_unit(philox4x32(make_counters(pulse_index, stream, block), seed_to_key(seed)))
