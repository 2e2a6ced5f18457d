"""Vectorised orbit engines.

* Integer digit windows for power maps of one constant base acting on random
  digit streams: T_n(x) is read off as a k-digit integer window of the stream
  and compared with integer-scaled arc endpoints.  Any comparison the window
  cannot settle is handed back to the exact scalar path.
* A batch of big-precision complex points for Blaschke sequences, with float
  angles plus a rigorous guard band for fast membership tests.
* Exact dyadic points for grid and Monte Carlo estimators under power maps.
"""

from __future__ import annotations

import math
from fractions import Fraction

import gmpy2
import numpy as np

from . import rng
from .cantor import DigitStream
from .circle import MIN_QUERY_BITS, PrecisionExhausted
from .maps import (ComplexAngle, MapSequence, PowerMap, _blaschke_mpc,
                   _mpc_zero_data, check_modulus, step_error)

# ---------------------------------------------------------------------------
# Digit windows


def window_digits(b: int) -> int:
    """Largest k with b**k <= 2**62."""
    k = 1
    while b ** (k + 1) <= 1 << 62:
        k += 1
    return k


def digit_windows(stream: DigitStream, N: int, k: int | None = None):
    """Integer windows W_n = sum_{j<=k} d_{n+j} b^{k-j} for n = 0..N.

    Returns (W, u, S): T_n(x) lies in [W_n / S, (W_n + u_n) / S] with S = b**k.
    Digits beyond the stream limit are unknown and widen u_n instead.
    """
    b = stream.bases.constant_base
    if b is None:
        raise ValueError("digit windows need a constant base")
    k = k or window_digits(b)
    S = b ** k
    L = stream.limit
    need = N + k
    have = need if L is None else min(need, L)
    q = b.bit_length() - 1
    if b == 1 << q and 64 % q == 0 and stream.mode == "random":
        W = _packed_windows(stream, N, k, q, have)
    else:
        d = np.zeros(need, dtype=np.int64)
        d[:have] = stream.block(1, have)
        W = np.zeros(N + 1, dtype=np.int64)
        for j in range(k):
            W = W * b + d[j:j + N + 1]
    missing = np.maximum(0, np.arange(N + 1) + k - have)
    u = np.power(np.int64(b), missing)
    return W, u, S


def _packed_windows(stream: DigitStream, N: int, k: int, q: int, have: int) -> np.ndarray:
    per = 64 // q
    nwords = -(-(N + k) // per) + 1
    words = rng.raw_words(stream.seed, stream.sample_id, 0, nwords)
    off = np.arange(N + 1, dtype=np.int64) * q
    wi = off // 64
    sh = (off % 64).astype(np.uint64)
    first = words[wi] << sh
    nxt = words[wi + 1] >> (np.uint64(64) - np.maximum(sh, np.uint64(1)))
    val = first | np.where(sh == 0, np.uint64(0), nxt)
    W = (val >> np.uint64(64 - k * q)).astype(np.int64)
    # zero the unknown tail beyond the stream limit
    missing = np.maximum(0, np.arange(N + 1) + k - have)
    if np.any(missing):
        mask = ~((np.int64(1) << (missing * q)) - 1)
        W = W & mask
    return W


def classify(A, c, hin, hout, S):
    """Decide 0 < V mod S < H for V in [A, A + c] (A already reduced mod S).

    ``hin`` and ``hout`` are integer thresholds with hin < H <= hout; returns
    (inside, ambiguous) boolean arrays.
    """
    top = A + c
    inside = (A >= 1) & (top <= hin)
    outside = (A >= hout) & (top <= S)
    return inside, ~(inside | outside)


# ---------------------------------------------------------------------------
# Big-precision complex batches


class ComplexBatch:
    """Many boundary points pushed through the same map sequence."""

    def __init__(self, seq: MapSequence, starts, prec: int):
        self.seq = seq
        self.prec = prec
        pts = [ComplexAngle.from_angle(x, prec) for x in starts]
        self.zs = [p.z for p in pts]
        self.lerr = max((p.lerr for p in pts), default=-prec)
        self.n = 0
        self._data: dict = {}

    def __len__(self) -> int:
        return len(self.zs)

    def step(self):
        m = self.seq.map_at(self.n + 1)
        lerr = step_error(m, self.lerr, self.prec)
        with gmpy2.context(gmpy2.get_context(), precision=self.prec):
            if isinstance(m, PowerMap):
                b = m.base
                zs = [z ** b for z in self.zs]
            else:
                data = self._data.get(m)
                if data is None:
                    data = self._data[m] = _mpc_zero_data(m, self.prec)
                zs = [_blaschke_mpc(data, z) for z in self.zs]
                for z in zs:
                    check_modulus(z, lerr, self.prec)
        self.zs = zs
        self.lerr = lerr
        self.n += 1
        if self.precision_bits() < MIN_QUERY_BITS:
            raise PrecisionExhausted("batch orbit precision exhausted", step=self.n)

    def angle(self, i: int) -> ComplexAngle:
        return ComplexAngle(self.zs[i], self.prec, self.lerr)

    def precision_bits(self) -> float:
        return ComplexAngle(None, self.prec, self.lerr).precision_bits()

    def turns(self) -> np.ndarray:
        re = np.fromiter((float(z.real) for z in self.zs), dtype=float, count=len(self.zs))
        im = np.fromiter((float(z.imag) for z in self.zs), dtype=float, count=len(self.zs))
        return np.mod(np.arctan2(im, re) / (2 * math.pi), 1.0)

    def float_guard(self) -> float:
        """Bound on |float turn - true turn|, rounding of the float path included."""
        return 2.0 ** (-self.precision_bits()) + 2.0 ** -48


def circ_dist(a, b):
    """Turn distance to the nearest integer of a - b (floats)."""
    d = np.mod(np.asarray(a) - np.asarray(b), 1.0)
    return np.minimum(d, 1.0 - d)


def float_member(theta, center, h, guard):
    """Float test d(theta, center) < h with a guard band; returns (inside, ambiguous)."""
    d = circ_dist(theta, center)
    inside = d < h - guard
    outside = d > h + guard
    return inside, ~(inside | outside)


# ---------------------------------------------------------------------------
# Exact dyadic points for power-map estimators


GOLDEN = (math.sqrt(5) - 1) / 2


def golden_grid(M: int, bits: int) -> np.ndarray:
    """Integers X_j = floor((j * 2**bits + G) / M), G = floor(2**bits * golden phase).

    X_j / 2**bits is the equispaced grid (j + phase)/M up to 2**-bits.
    """
    from .schedules import golden_turn_bounds

    g = golden_turn_bounds(max(128, bits + 8))[0]
    scale = 1 << bits
    gs = math.floor(g * scale)
    if bits <= 62:
        q, r = divmod(scale, M)
        j = np.arange(M, dtype=np.int64)
        return j * q + (j * r + gs) // M
    return np.array([(j * scale + gs) // M for j in range(M)], dtype=object)


def random_dyadics(seed: int, count: int, bits: int, stream: int = 2) -> np.ndarray:
    """``count`` uniform integers in [0, 2**bits), one Philox stream per point block."""
    nwords = -(-bits // 64)
    words = rng.raw_words(seed, 0, 0, count * nwords, stream).reshape(count, nwords)
    if bits <= 62:
        return (words[:, 0] >> np.uint64(64 - bits)).astype(np.int64)
    out = np.empty(count, dtype=object)
    for i in range(count):
        v = 0
        for w in words[i]:
            v = (v << 64) | int(w)
        out[i] = v >> (64 * nwords - bits)
    return out


def mul_mod_pow2(X, mult: int, bits: int):
    """(mult * X) mod 2**bits, exact, for int64 (bits <= 62) or object arrays."""
    if X.dtype != object:
        m = np.uint64(mult % (1 << bits))
        prod = X.astype(np.uint64) * m  # wraps mod 2**64, consistent mod 2**bits
        return (prod & np.uint64((1 << bits) - 1)).astype(np.int64)
    mod = 1 << bits
    mult %= mod
    return np.array([(mult * int(x)) % mod for x in X], dtype=object)


class PointSet:
    """Starting points X_j / 2**bits, exact dyadic rationals."""

    def __init__(self, X: np.ndarray, bits: int, method: str):
        self.X = X
        self.bits = bits
        self.method = method

    @classmethod
    def grid(cls, M: int, bits: int = 62) -> "PointSet":
        return cls(golden_grid(M, bits), bits, "grid")

    @classmethod
    def random(cls, seed: int, M: int, bits: int = 62) -> "PointSet":
        return cls(random_dyadics(seed, M, bits), bits, "monte-carlo")

    def __len__(self) -> int:
        return len(self.X)

    @property
    def S(self) -> int:
        return 1 << self.bits

    def fraction(self, i: int) -> Fraction:
        return Fraction(int(self.X[i]), self.S)

    def fractions(self) -> list:
        S = self.S
        return [Fraction(int(x), S) for x in self.X]

    def floats(self) -> np.ndarray:
        return np.asarray([int(x) for x in self.X], dtype=float) / float(self.S)


def scaled_arc_bounds(arc, S: int):
    """Integers (lf, lc, hf, hc) with lf <= (c - h) S <= lc and hf <= 2 h S <= hc."""
    from .circle import half_turn_bounds, turn_bounds

    cl, ch = turn_bounds(arc.center, 256)
    hl, hh = half_turn_bounds(arc.radius)
    lf = math.floor((cl - hh) * S)
    lc = math.ceil((ch - hl) * S)
    return lf, lc, math.floor(2 * hl * S), math.ceil(2 * hh * S)


def int_arc_member(T, arc, S: int):
    """(inside, ambiguous) for exact points T / S against an open arc."""
    lf, lc, hf, hc = scaled_arc_bounds(arc, S)
    if T.dtype == object:
        A = np.array([(int(t) - lc) % S for t in T], dtype=object)
        top = A + (lc - lf)
        inside = np.array([(a >= 1) and (tp <= hf - 1) for a, tp in zip(A, top)], dtype=bool)
        outside = np.array([(a >= hc) and (tp <= S) for a, tp in zip(A, top)], dtype=bool)
        return inside, ~(inside | outside)
    A = np.mod(T - np.int64(lc % S), np.int64(S))
    return classify(A, np.int64(lc - lf), hf - 1, hc, S)
