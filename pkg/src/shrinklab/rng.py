"""Counter-based random streams keyed by (master seed, sample id).

Every sample owns an independent Philox stream, so word ``j`` of sample ``s``
does not depend on how many other samples exist or in which order they are
evaluated.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def sample_generator(seed: int, sample_id: int, stream: int = 0) -> np.random.Generator:
    key = np.array([seed & _MASK64, ((stream & 0xFFFF) << 48) | (sample_id & ((1 << 48) - 1))],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def raw_words(seed: int, sample_id: int, start: int, count: int, stream: int = 0) -> np.ndarray:
    """Raw uint64 words ``start .. start+count-1`` of a sample's stream."""
    bitgen = sample_generator(seed, sample_id, stream).bit_generator
    # Philox emits four words per counter increment.
    bitgen.advance(start // 4)
    skip = start % 4
    words = bitgen.random_raw(count + skip)
    return np.asarray(words[skip:], dtype=np.uint64)


def mulhi(words: np.ndarray, base: int) -> np.ndarray:
    """floor(word * base / 2**64) for base < 2**32, exact in uint64 pieces."""
    if not 2 <= base < 1 << 32:
        raise ValueError("base must lie in [2, 2**32)")
    b = np.uint64(base)
    hi = words >> np.uint64(32)
    lo = words & np.uint64(0xFFFFFFFF)
    return ((hi * b) + ((lo * b) >> np.uint64(32))) >> np.uint64(32)


def uniform_dyadic(seed: int, sample_id: int, bits: int, stream: int = 1) -> int:
    """A uniformly random integer in [0, 2**bits) from the sample's stream."""
    nwords = -(-bits // 64)
    words = raw_words(seed, sample_id, 0, nwords, stream)
    value = 0
    for w in words:
        value = (value << 64) | int(w)
    return value >> (64 * nwords - bits)
