"""Points, arcs, geodesic distance and normalized measure on the unit circle.

Positions are fractions of a full turn in [0, 1).  Radii and distances are in
radians, so an arc of radius r has normalized Lebesgue measure r/pi.

Three angle representations are understood everywhere:

* ``fractions.Fraction`` (and int/float, converted exactly): exact rationals.
* :class:`FixedAngle`: a dyadic value with an explicit error radius.
* any object exposing ``turn_bounds(bits)`` and ``precision_bits()``, e.g. the
  lazy digit streams of :mod:`shrinklab.cantor` or the big-complex points
  produced by Blaschke orbits.

Membership queries never round: when the available precision cannot decide a
comparison, :class:`PrecisionExhausted` is raised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import mpmath

# A query is refused once fewer than this many bits of the position survive.
MIN_QUERY_BITS = 32


class PrecisionExhausted(ArithmeticError):
    """A representation cannot resolve a comparison or another orbit step."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class BoundaryTie(ArithmeticError):
    """An exactly representable arc endpoint was hit."""


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, float)):
        return Fraction(x)
    raise TypeError(f"not an exact angle: {x!r}")


def is_exact(p) -> bool:
    return isinstance(p, (Fraction, int, float))


def reduce_turn(x) -> Fraction:
    x = as_fraction(x)
    return x - math.floor(x)


@dataclass(frozen=True)
class FixedAngle:
    """Dyadic position ``mantissa / 2**bits`` known up to ``err / 2**bits``."""

    mantissa: int
    bits: int
    err: int = 0

    def __post_init__(self):
        if self.bits < 0 or self.err < 0:
            raise ValueError("bits and err must be non-negative")
        object.__setattr__(self, "mantissa", self.mantissa % (1 << self.bits))

    @classmethod
    def from_fraction(cls, x, bits: int) -> "FixedAngle":
        x = reduce_turn(x)
        scaled = x * (1 << bits)
        m = math.floor(scaled)
        return cls(m, bits, 0 if m == scaled else 1)

    def precision_bits(self) -> float:
        if self.err == 0:
            return math.inf
        return self.bits - math.log2(self.err)

    def turn_bounds(self, bits: int = 0) -> tuple[Fraction, Fraction]:
        den = 1 << self.bits
        return Fraction(self.mantissa - self.err, den), Fraction(self.mantissa + self.err, den)

    def __float__(self) -> float:
        return self.mantissa / 2.0 ** self.bits


Angle = Union[Fraction, int, float, FixedAngle, object]


def precision_bits(p) -> float:
    if is_exact(p):
        return math.inf
    return p.precision_bits()


def turn_bounds(p, bits: int = 64) -> tuple[Fraction, Fraction]:
    """Closed rational interval (not reduced mod 1) containing the position."""
    if is_exact(p):
        x = reduce_turn(p)
        return x, x
    return p.turn_bounds(bits)


def to_float(p) -> float:
    if is_exact(p):
        return float(reduce_turn(p))
    lo, hi = turn_bounds(p, 64)
    return float((lo + hi) / 2) % 1.0


@dataclass(frozen=True)
class PiMultiple:
    """A radius given exactly as ``coef * pi`` radians."""

    coef: Fraction

    def __post_init__(self):
        object.__setattr__(self, "coef", as_fraction(self.coef))

    def __float__(self) -> float:
        return float(self.coef) * math.pi


Radius = Union[float, PiMultiple]

_IV_PREC = 160


def half_turn_bounds(radius: Radius) -> tuple[Fraction, Fraction]:
    """Rigorous bounds for radius/(2*pi), i.e. the half-width in turns."""
    if isinstance(radius, PiMultiple):
        h = radius.coef / 2
        return h, h
    with mpmath.workprec(_IV_PREC):
        iv = mpmath.iv.mpf(float(radius)) / (2 * mpmath.iv.pi)
        lo, hi = iv.a, iv.b
    return Fraction(*_mpf_ratio(lo)), Fraction(*_mpf_ratio(hi))


def _mpf_ratio(x) -> tuple[int, int]:
    man, exp = mpmath.mpf(x).man_exp
    man = int(man)
    exp = int(exp)
    if exp >= 0:
        return man << exp, 1
    return man, 1 << -exp


def radius_value(radius: Radius) -> float:
    return float(radius)


def validate_radius(radius: Radius) -> Radius:
    if isinstance(radius, PiMultiple):
        if not 0 < radius.coef <= 1:
            raise ValueError(f"radius {radius.coef}*pi outside (0, pi]")
        return radius
    r = float(radius)
    if not (r > 0 and math.isfinite(r)):
        raise ValueError(f"radius {r} must be positive")
    if r > math.pi:
        raise ValueError(f"radius {r} exceeds pi")
    return r


@dataclass(frozen=True)
class Arc:
    """Open geodesic ball B(center, radius); radius in radians, 0 < r <= pi."""

    center: object
    radius: Radius

    def __post_init__(self):
        object.__setattr__(self, "radius", validate_radius(self.radius))

    @property
    def is_full(self) -> bool:
        if isinstance(self.radius, PiMultiple):
            return self.radius.coef == 1
        return self.radius == math.pi


def arc_measure(arc: Arc) -> float:
    if isinstance(arc.radius, PiMultiple):
        return float(arc.radius.coef)
    return min(1.0, arc.radius / math.pi)


def _tent_interval(lo: Fraction, hi: Fraction) -> tuple[Fraction, Fraction]:
    """Range of t -> distance from t to the nearest integer over [lo, hi]."""
    if hi - lo >= 1:
        return Fraction(0), Fraction(1, 2)
    shift = math.floor(lo)
    lo, hi = lo - shift, hi - shift

    def tent(t):
        t = t - math.floor(t)
        return min(t, 1 - t)

    vals = [tent(lo), tent(hi)]
    dmin, dmax = min(vals), max(vals)
    if lo <= 1 <= hi:
        dmin = Fraction(0)
    if lo <= Fraction(1, 2) <= hi or lo <= Fraction(3, 2) <= hi:
        dmax = Fraction(1, 2)
    return dmin, dmax


def _bit_ladder(*points):
    cap = min(precision_bits(p) for p in points)
    bits = 64
    while True:
        yield bits
        if bits >= cap:
            return
        bits *= 2
        if bits > 1 << 24:
            return


def distance_turn_bounds(a, b, bits: int = 64) -> tuple[Fraction, Fraction]:
    alo, ahi = turn_bounds(a, bits)
    blo, bhi = turn_bounds(b, bits)
    return _tent_interval(alo - bhi, ahi - blo)


def geodesic_distance(a, b) -> float:
    """Angular distance in radians, 2*pi*min(|d|, 1-|d|) with d in turns."""
    for bits in _bit_ladder(a, b):
        lo, hi = distance_turn_bounds(a, b, bits)
        if hi - lo <= Fraction(1, 1 << 52) * max(hi, Fraction(1, 1 << 20)):
            return 2 * math.pi * float((lo + hi) / 2)
    raise PrecisionExhausted("cannot resolve geodesic distance")


def arc_contains(arc: Arc, p, ties: str = "open") -> bool:
    """Strict membership d(center, p) < radius.

    ``ties="raise"`` turns an exact boundary hit into :class:`BoundaryTie`
    instead of answering ``False``.
    """
    hlo, hhi = half_turn_bounds(arc.radius)
    for bits in _bit_ladder(arc.center, p):
        dlo, dhi = distance_turn_bounds(arc.center, p, bits)
        if dhi < hlo:
            return True
        if dlo > hhi:
            return False
        if dlo == dhi == hlo == hhi:
            if ties == "raise":
                raise BoundaryTie("point lies exactly on the arc boundary")
            return False
    raise PrecisionExhausted("membership undecidable at available precision")
