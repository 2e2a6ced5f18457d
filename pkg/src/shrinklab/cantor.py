"""Exact multi-base (Cantor series) expansions.

A point x in [0, 1) is written x = sum_i d_i / (b_1 ... b_i) with 0 <= d_i < b_i.
Multiplying by b_1, then b_2, ... acts as a left shift on the digits, so lazy
digit streams double as exact orbits of power-map sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import rng
from .circle import PrecisionExhausted, as_fraction
from .stats import DEFAULT_EPS, HitStatistics, check_checkpoints, counts_at


class BaseSequence:
    """Integer bases b_1, b_2, ... (1-indexed), all >= 2."""

    def __init__(self, values: Sequence[int] = (), kind: str = "periodic",
                 rule: Callable[[int], int] | None = None, label: str | None = None):
        values = tuple(int(v) for v in values)
        if kind not in ("constant", "periodic", "explicit", "rule"):
            raise ValueError(f"unknown base sequence kind {kind!r}")
        if kind == "rule":
            if rule is None:
                raise ValueError("rule-based sequence needs a rule")
        elif not values:
            raise ValueError("base sequence needs at least one base")
        if any(v < 2 for v in values):
            raise ValueError("bases must be >= 2")
        self.kind = kind
        self.values = values
        self.rule = rule
        self.label = label or f"{kind}{list(values)}"

    @classmethod
    def constant(cls, b: int) -> "BaseSequence":
        return cls((b,), "constant")

    @classmethod
    def periodic(cls, values) -> "BaseSequence":
        values = tuple(values)
        if len(set(values)) == 1:
            return cls.constant(values[0])
        return cls(values, "periodic")

    @classmethod
    def explicit(cls, values) -> "BaseSequence":
        """Finite list, continued by repeating the last base."""
        return cls(values, "explicit")

    @classmethod
    def from_rule(cls, rule: Callable[[int], int], label: str = "rule") -> "BaseSequence":
        return cls((), "rule", rule, label)

    @property
    def constant_base(self) -> int | None:
        return self.values[0] if self.kind == "constant" else None

    def base(self, i: int) -> int:
        if i < 1:
            raise IndexError("bases are 1-indexed")
        if self.kind == "constant":
            return self.values[0]
        if self.kind == "periodic":
            return self.values[(i - 1) % len(self.values)]
        if self.kind == "explicit":
            return self.values[min(i, len(self.values)) - 1]
        b = int(self.rule(i))
        if b < 2:
            raise ValueError(f"rule produced base {b} < 2 at index {i}")
        return b

    def bases(self, start: int, count: int) -> np.ndarray:
        """b_start, ..., b_{start+count-1} as int64."""
        if count <= 0:
            return np.zeros(0, dtype=np.int64)
        if self.kind == "constant":
            return np.full(count, self.values[0], dtype=np.int64)
        idx = np.arange(start, start + count)
        if self.kind == "periodic":
            return np.asarray(self.values, dtype=np.int64)[(idx - 1) % len(self.values)]
        if self.kind == "explicit":
            v = np.asarray(self.values, dtype=np.int64)
            return v[np.minimum(idx, len(v)) - 1]
        return np.array([self.base(int(i)) for i in idx], dtype=np.int64)

    def product(self, n: int, start: int = 1) -> int:
        """b_start * ... * b_{start+n-1}, exactly (B_n for start = 1)."""
        if n <= 0:
            return 1
        if self.kind == "constant":
            return self.values[0] ** n
        out = 1
        for b in self.bases(start, n).tolist():
            out *= b
        return out

    def log2_sum(self, start: int, count: int) -> float:
        if count <= 0:
            return 0.0
        if self.kind == "constant":
            return count * math.log2(self.values[0])
        return float(np.log2(self.bases(start, count).astype(float)).sum())

    def digits_for_bits(self, bits: float, start: int = 1) -> int:
        """Smallest k with log2(b_start ... b_{start+k-1}) >= bits."""
        if bits <= 0:
            return 0
        if self.kind == "constant":
            return math.ceil(bits / math.log2(self.values[0]) - 1e-12)
        k, acc = 0, 0.0
        while acc < bits:
            acc += math.log2(self.base(start + k))
            k += 1
        return k

    def to_config(self) -> dict:
        if self.kind == "rule":
            return {"kind": "rule", "label": self.label}
        return {"kind": self.kind, "values": list(self.values)}

    def __repr__(self) -> str:
        return f"BaseSequence({self.label})"


def expand(x, bases: BaseSequence, k: int) -> list[int]:
    """First k greedy digits of x in [0, 1)."""
    x = as_fraction(x)
    if not 0 <= x < 1:
        raise ValueError("x must lie in [0, 1)")
    num, den = x.numerator, x.denominator
    out = []
    for b in bases.bases(1, k).tolist():
        num *= b
        d, num = divmod(num, den)
        out.append(d)
    return out


def value_of(digits: Sequence[int], bases: BaseSequence, start: int = 1) -> Fraction:
    """sum_i d_i / (b_start ... b_{start+i-1})."""
    digits = [int(d) for d in digits]
    bs = bases.bases(start, len(digits)).tolist()
    num, den = 0, 1
    for d, b in zip(digits, bs):
        if not 0 <= d < b:
            raise ValueError(f"digit {d} out of range for base {b}")
        num = num * b + d
        den *= b
    return Fraction(num, den)


def _bit_digits(words: np.ndarray, q: int) -> np.ndarray:
    """Split uint64 words into base-2**q digits, most significant first."""
    per = 64 // q
    shifts = np.arange(64 - q, 64 - q * (per + 1), -q, dtype=np.uint64)
    mask = np.uint64((1 << q) - 1)
    return ((words[:, None] >> shifts[None, :]) & mask).astype(np.int64).ravel()


class DigitStream:
    """Lazy digits d_1, d_2, ... of a point in a multi-base system.

    Modes: ``canonical`` (greedy expansion of a rational), ``explicit`` (a
    prefix followed by a repeating block) and ``random`` (independent uniform
    digits drawn from a counter-based generator keyed by seed and sample id).
    ``limit`` caps how many digits exist; reading past it raises
    :class:`PrecisionExhausted`.
    """

    _CHUNK = 4096

    def __init__(self, bases: BaseSequence, mode: str, *, value: Fraction | None = None,
                 prefix: Sequence[int] = (), repeat: Sequence[int] = (),
                 seed: int | None = None, sample_id: int = 0, limit: int | None = None):
        if mode not in ("canonical", "explicit", "random"):
            raise ValueError(f"unknown stream mode {mode!r}")
        self.bases = bases
        self.mode = mode
        self.value = value
        self.prefix = tuple(int(d) for d in prefix)
        self.repeat = tuple(int(d) for d in repeat)
        self.seed = seed
        self.sample_id = sample_id
        self.limit = limit
        self._digits = np.zeros(0, dtype=np.int64)
        self._rem = (0, None)
        if mode == "canonical":
            self._num, self._den = value.numerator, value.denominator
        if mode == "explicit":
            self._check_explicit()
        if mode == "random" and seed is None:
            raise ValueError("random stream needs a seed")

    @classmethod
    def canonical(cls, x, bases: BaseSequence) -> "DigitStream":
        x = as_fraction(x)
        if not 0 <= x < 1:
            raise ValueError("x must lie in [0, 1)")
        return cls(bases, "canonical", value=x)

    @classmethod
    def explicit(cls, prefix, bases: BaseSequence, repeat=(0,)) -> "DigitStream":
        return cls(bases, "explicit", prefix=prefix, repeat=repeat)

    @classmethod
    def random(cls, bases: BaseSequence, seed: int, sample_id: int = 0,
               limit: int | None = None) -> "DigitStream":
        return cls(bases, "random", seed=seed, sample_id=sample_id, limit=limit)

    def _check_explicit(self):
        if not self.repeat:
            raise ValueError("explicit stream needs a non-empty repeating block")
        n = len(self.prefix) + 4 * len(self.repeat) * max(1, len(self.bases.values))
        self._ensure(n)

    @property
    def exact_value(self) -> Fraction | None:
        return self.value if self.mode == "canonical" else None

    def shifted_value(self, n: int) -> Fraction:
        """frac(B_n x) for canonical streams, via B_n mod denominator."""
        if self.mode != "canonical":
            raise ValueError("exact shift only for canonical streams")
        last_n, last_r = self._rem
        if last_r is None or n < last_n:
            last_n, last_r = 0, self._num % self._den
        r = last_r
        if self.bases.kind == "constant":
            r = r * pow(self.bases.values[0], n - last_n, self._den) % self._den
        else:
            for b in self.bases.bases(last_n + 1, n - last_n).tolist():
                r = r * b % self._den
        self._rem = (n, r)
        return Fraction(r, self._den)

    def _generate(self, start: int, count: int) -> np.ndarray:
        """Digits with 0-based positions start .. start+count-1."""
        bs = self.bases.bases(start + 1, count)
        if self.mode == "canonical":
            num, den = self._num, self._den
            out = np.empty(count, dtype=np.int64)
            for j, b in enumerate(bs.tolist()):
                num *= b
                d, num = divmod(num, den)
                out[j] = d
            self._num = num
            return out
        if self.mode == "explicit":
            p, rep = len(self.prefix), self.repeat
            out = np.array([self.prefix[i] if i < p else rep[(i - p) % len(rep)]
                            for i in range(start, start + count)], dtype=np.int64)
            if np.any(out >= bs) or np.any(out < 0):
                raise ValueError("explicit digit out of range for its base")
            return out
        cb = self.bases.constant_base
        q = cb.bit_length() - 1 if cb is not None and cb & (cb - 1) == 0 else 0
        if q and 64 % q == 0:
            per = 64 // q
            w0, w1 = start // per, -(-(start + count) // per)
            words = rng.raw_words(self.seed, self.sample_id, w0, w1 - w0)
            digs = _bit_digits(words, q)
            off = start - w0 * per
            return digs[off:off + count]
        words = rng.raw_words(self.seed, self.sample_id, start, count)
        out = np.empty(count, dtype=np.int64)
        for b in np.unique(bs):
            sel = bs == b
            out[sel] = rng.mulhi(words[sel], int(b)).astype(np.int64)
        return out

    def _ensure(self, n: int):
        """Materialize digits d_1 .. d_n."""
        have = self._digits.size
        if n <= have:
            return
        if self.limit is not None and n > self.limit:
            raise PrecisionExhausted(f"digit {n} requested beyond stream limit {self.limit}")
        want = max(n, min(2 * have, have + (1 << 22)), self._CHUNK)
        if self.limit is not None:
            want = min(want, self.limit)
        self._digits = np.concatenate([self._digits, self._generate(have, want - have)])

    def digit(self, i: int) -> int:
        if i < 1:
            raise IndexError("digits are 1-indexed")
        self._ensure(i)
        return int(self._digits[i - 1])

    def block(self, start: int, count: int) -> np.ndarray:
        """d_start .. d_{start+count-1} (start is 1-indexed)."""
        if count <= 0:
            return np.zeros(0, dtype=np.int64)
        self._ensure(start + count - 1)
        return self._digits[start - 1:start - 1 + count].copy()

    def available(self) -> int | None:
        return self.limit

    def angle(self, offset: int = 0) -> "DigitAngle":
        return DigitAngle(self, offset)


@dataclass(frozen=True)
class DigitAngle:
    """Position frac(B_offset * x) of a digit stream, i.e. its offset-fold shift."""

    stream: DigitStream
    offset: int = 0

    def shift(self, k: int = 1) -> "DigitAngle":
        return DigitAngle(self.stream, self.offset + k)

    def next_base(self) -> int:
        return self.stream.bases.base(self.offset + 1)

    def precision_bits(self) -> float:
        s = self.stream
        if s.mode != "random" or s.limit is None:
            return math.inf
        return s.bases.log2_sum(self.offset + 1, s.limit - self.offset)

    def turn_bounds(self, bits: int = 64) -> tuple[Fraction, Fraction]:
        s = self.stream
        if s.mode == "canonical":
            v = s.shifted_value(self.offset)
            return v, v
        if s.mode == "explicit":
            v = _explicit_exact(s, self.offset)
            if v is not None:
                return v, v
        k = s.bases.digits_for_bits(bits, self.offset + 1)
        if s.limit is not None:
            k = min(k, max(0, s.limit - self.offset))
        digs = s.block(self.offset + 1, k).tolist()
        bs = s.bases.bases(self.offset + 1, k).tolist()
        num, den = 0, 1
        for d, b in zip(digs, bs):
            num = num * b + d
            den *= b
        return Fraction(num, den), Fraction(num + 1, den)

    def __float__(self) -> float:
        lo, hi = self.turn_bounds(64)
        return float((lo + hi) / 2) % 1.0


def _explicit_exact(s: DigitStream, offset: int) -> Fraction | None:
    """Exact value of an eventually periodic stream in periodic bases."""
    if s.bases.kind not in ("constant", "periodic"):
        return None
    period = math.lcm(len(s.repeat), len(s.bases.values))
    start = max(offset, len(s.prefix))
    lead = value_of(s.block(offset + 1, start - offset), s.bases, offset + 1)
    head = value_of(s.block(start + 1, period), s.bases, start + 1)
    scale = s.bases.product(period, start + 1)
    tail = head * Fraction(scale, scale - 1)
    return lead + tail / s.bases.product(start - offset, offset + 1)


# ---------------------------------------------------------------------------
# Pattern schedules

def _floor_log2(n: np.ndarray) -> np.ndarray:
    # frexp is exact for integers below 2**53
    return np.frexp(np.maximum(n, 1).astype(float))[1].astype(np.int64) - 1


XI_FAMILIES = {
    "floor-log2": _floor_log2,
    "floor-log2-plus-1": lambda n: _floor_log2(n) + 1,
    "identity": lambda n: np.asarray(n, dtype=np.int64),
}


def xi_function(name: str, k: int | None = None) -> Callable[[np.ndarray], np.ndarray]:
    if name == "constant":
        if k is None or k < 0:
            raise ValueError("constant xi needs k >= 0")
        return lambda n: np.full(np.shape(n), k, dtype=np.int64)
    if name not in XI_FAMILIES:
        raise ValueError(f"unknown xi family {name!r}")
    base = XI_FAMILIES[name]
    return lambda n: base(np.asarray(n, dtype=np.int64))


@dataclass(frozen=True)
class PatternSchedule:
    """Require d_{n+i} = c_i for i = 1 .. xi(n); c is the expansion of x0."""

    xi: Callable[[np.ndarray], np.ndarray]
    target: DigitStream
    label: str = "pattern"

    @classmethod
    def zeros(cls, xi, bases: BaseSequence, label: str = "zeros") -> "PatternSchedule":
        return cls(xi, DigitStream.canonical(Fraction(0), bases), label)

    @classmethod
    def from_point(cls, x0, bases: BaseSequence, xi, label: str | None = None) -> "PatternSchedule":
        return cls(xi, DigitStream.canonical(as_fraction(x0), bases), label or f"x0={x0}")

    def lengths(self, n) -> np.ndarray:
        out = np.asarray(self.xi(np.asarray(n, dtype=np.int64)), dtype=np.int64)
        if np.any(out < 0):
            raise ValueError("xi must be non-negative")
        return out

    def validated_lengths(self, N: int) -> np.ndarray:
        ks = self.lengths(np.arange(1, N + 1))
        if ks.size > 1 and np.any(np.diff(ks) < 0):
            raise ValueError("xi must be non-decreasing")
        return ks

    def digits(self, k: int) -> np.ndarray:
        return self.target.block(1, k)


def match_run(x: DigitStream, n: int, pattern: PatternSchedule) -> bool:
    k = int(pattern.lengths([n])[0])
    if k == 0:
        return True
    return bool(np.array_equal(x.block(n + 1, k), pattern.digits(k)))


def match_mask(x: DigitStream, pattern: PatternSchedule, N: int,
               lengths: np.ndarray | None = None) -> np.ndarray:
    """Boolean array whose entry n-1 says whether the pattern matches at n."""
    ks = pattern.validated_lengths(N) if lengths is None else lengths
    if N == 0:
        return np.zeros(0, dtype=bool)
    kmax = int(ks.max())
    d = x.block(1, N + kmax)
    c = pattern.digits(kmax)
    alive = np.ones(N, dtype=bool)
    idx = np.arange(1, N + 1)
    for i in range(1, kmax + 1):
        need = ks >= i
        alive &= ~need | (d[idx + i - 1] == c[i - 1])
    return alive


def phi_cantor_exact(bases: BaseSequence, xi, N: int) -> Fraction:
    """sum_{n <= N} 1 / (b_1 ... b_{xi(n)+1}) as an exact rational."""
    if N <= 0:
        return Fraction(0)
    ks = np.asarray(xi(np.arange(1, N + 1)), dtype=np.int64)
    vals, cnt = np.unique(ks, return_counts=True)
    return sum((Fraction(int(c), bases.product(int(v) + 1)) for v, c in zip(vals, cnt)), Fraction(0))


def phi_cantor(bases: BaseSequence, xi, N: int) -> float:
    return float(phi_cantor_exact(bases, xi, N))


def phi_cantor_checkpoints(bases: BaseSequence, xi, checkpoints) -> list[float]:
    out, acc, prev = [], Fraction(0), 0
    for N in checkpoints:
        ks = np.asarray(xi(np.arange(prev + 1, N + 1)), dtype=np.int64)
        if ks.size:
            vals, cnt = np.unique(ks, return_counts=True)
            acc += sum((Fraction(int(c), bases.product(int(v) + 1)) for v, c in zip(vals, cnt)),
                       Fraction(0))
        out.append(float(acc))
        prev = N
    return out


def expected_pattern_count(bases: BaseSequence, pattern: PatternSchedule, N: int) -> float:
    """Exact mean of count(N) for uniform digits: sum_n prod_i [c_i < b_{n+i}] / b_{n+i}."""
    if N <= 0:
        return 0.0
    ks = pattern.validated_lengths(N)
    kmax = int(ks.max())
    c = pattern.digits(kmax)
    bs = bases.bases(1, N + kmax).astype(float)
    prob = np.ones(N)
    idx = np.arange(1, N + 1)
    for i in range(1, kmax + 1):
        need = ks >= i
        b = bs[idx + i - 1]
        p = np.where(c[i - 1] < b, 1.0 / b, 0.0)
        prob = np.where(need, prob * p, prob)
    return float(math.fsum(prob))


def count_patterns(x: DigitStream, pattern: PatternSchedule, checkpoints,
                   eps: float = DEFAULT_EPS, sample_id: int | None = None) -> HitStatistics:
    cps = check_checkpoints(checkpoints)
    N = cps[-1] if cps else 0
    mask = match_mask(x, pattern, N)
    counts = counts_at(mask, cps)
    phis = phi_cantor_checkpoints(x.bases, pattern.xi, cps)
    return HitStatistics.build(cps, counts, phis, eps, seed=x.seed, sample_id=sample_id,
                               metadata={"pattern": pattern.label})


def ball_events(x: DigitStream, n: int, pattern: PatternSchedule) -> dict:
    """Digit match at n together with the ball events that bracket it.

    With k = xi(n) and q_j = b_{n+1} ... b_{n+j} (the bases seen by the shifted
    point), the match says T_n x lies in [v, v + 1/q_k) where
    v = sum_{i<=k} c_i / q_i.  ``inner`` is the open ball centred at the
    cylinder midpoint with radius 1/(2 q_k); ``outer`` is the open ball
    B(v, 1/q_k).  ``x0_ball`` is the closed ball around x0 of radius
    1/(b_1 ... b_{k+1}), reported without any inclusion claim.  All radii here
    are in turns.
    """
    k = int(pattern.lengths([n])[0])
    c = pattern.digits(k).tolist()
    qs = x.bases.bases(n + 1, k).tolist()
    valid = all(ci < b for ci, b in zip(c, qs))
    q = math.prod(qs)
    v = value_of(c, x.bases, n + 1) if valid else None
    pos = DigitAngle(x, n)
    match = match_run(x, n, pattern)

    def within(center, rad, closed=False):
        bits = 64 + int(math.log2(q)) + 2
        lo, hi = pos.turn_bounds(bits)
        # signed offset reduced to (-1/2, 1/2]
        dlo = lo - center
        dlo -= math.floor(dlo + Fraction(1, 2))
        dhi = dlo + (hi - lo)
        if dhi - dlo >= Fraction(1, 2):
            raise PrecisionExhausted("ball test undecidable")
        a, b = abs(dlo), abs(dhi)
        dmin = Fraction(0) if dlo <= 0 <= dhi else min(a, b)
        dmax = max(a, b)
        if (dmax < rad) or (closed and dmax <= rad):
            return True
        if (dmin > rad) or (not closed and dmin >= rad):
            return False
        raise PrecisionExhausted("ball test undecidable")

    out = {"n": n, "k": k, "match": match}
    if valid:
        out["inner"] = within(v + Fraction(1, 2 * q), Fraction(1, 2 * q))
        out["outer"] = within(v, Fraction(1, q))
    else:
        out["inner"] = False
        out["outer"] = False
    x0 = pattern.target.exact_value
    if x0 is not None:
        out["x0_ball"] = within(x0, Fraction(1, x.bases.product(k + 1)), closed=True)
    return out
