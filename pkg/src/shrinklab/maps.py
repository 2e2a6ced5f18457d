"""Circle maps (power maps and centred finite Blaschke products) and their
non-autonomous compositions T_n = t_n o ... o t_1.

Blaschke orbits run in gmpy2 big-float complex arithmetic.  Each step of an
expanding map destroys about log2 |t'| bits, so an orbit of length N reserves

    P = sum_{k <= N} log2 D_k + 64 bits,   D_k = sum_j (1 + |a_j|) / (1 - |a_j|)

(D_k = b for a power map) and every intermediate point carries a rigorous
error radius.  A point whose error radius leaves fewer than
``MIN_QUERY_BITS`` bits raises :class:`PrecisionExhausted` with the step index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

import gmpy2
import numpy as np
from gmpy2 import mpc, mpfr

from .cantor import BaseSequence, DigitAngle
from .circle import (MIN_QUERY_BITS, FixedAngle, PrecisionExhausted, as_fraction,
                     is_exact, precision_bits, reduce_turn, turn_bounds)

DEFAULT_MAX_MODULUS = 1 - 1e-6
GUARD_BITS = 32


class ModulusDrift(ArithmeticError):
    """|b(z)| left the unit circle by more than the arithmetic can explain."""


@dataclass(frozen=True)
class PowerMap:
    base: int

    def __post_init__(self):
        if int(self.base) != self.base or self.base < 2:
            raise ValueError("power map base must be an integer >= 2")

    @property
    def degree(self) -> int:
        return self.base

    @property
    def alpha(self) -> float:
        return 0.0

    @property
    def derivative_bound(self) -> float:
        return float(self.base)

    def to_config(self) -> dict:
        return {"power": self.base}


@dataclass(frozen=True)
class Blaschke:
    """z -> prod_k (|a_k|/a_k)(a_k - z)/(1 - conj(a_k) z), the factor being z when a_k = 0."""

    zeros: tuple
    max_modulus: float = DEFAULT_MAX_MODULUS

    def __post_init__(self):
        zs = tuple(complex(a) for a in self.zeros)
        object.__setattr__(self, "zeros", zs)
        if len(zs) < 2:
            raise ValueError("Blaschke product needs degree >= 2")
        if not any(a == 0 for a in zs):
            raise ValueError("Blaschke product must be centred (one zero at 0)")
        for a in zs:
            if abs(a) >= 1:
                raise ValueError(f"zero {a} outside the unit disk")
            if abs(a) > self.max_modulus:
                raise ValueError(f"|zero| {abs(a)} exceeds configured bound {self.max_modulus}")

    @property
    def degree(self) -> int:
        return len(self.zeros)

    @property
    def alpha(self) -> float:
        return math.prod(abs(a) for a in self.zeros if a != 0)

    @property
    def derivative_bound(self) -> float:
        return sum((1 + abs(a)) / (1 - abs(a)) for a in self.zeros)

    @property
    def min_distance_to_circle(self) -> float:
        return 1 - max(abs(a) for a in self.zeros)

    def to_config(self) -> dict:
        return {"zeros": [[a.real, a.imag] for a in self.zeros]}


MapSpec = PowerMap | Blaschke


def map_from_config(obj) -> MapSpec:
    if isinstance(obj, (PowerMap, Blaschke)):
        return obj
    if "power" in obj:
        return PowerMap(int(obj["power"]))
    zs = [complex(z[0], z[1]) if isinstance(z, (list, tuple)) else complex(z) for z in obj["zeros"]]
    return Blaschke(tuple(zs), obj.get("max_modulus", DEFAULT_MAX_MODULUS))


# ---------------------------------------------------------------------------
# Float evaluation, derivatives and lifts


def blaschke_eval(m: Blaschke, z):
    """Vectorised float evaluation of the product at complex z."""
    z = np.asarray(z, dtype=complex)
    out = np.ones_like(z)
    for a in m.zeros:
        if a == 0:
            out = out * z
        else:
            out = out * (abs(a) / a) * (a - z) / (1 - np.conj(a) * z)
    return out


def boundary_derivative(m: MapSpec, p) -> float:
    """|t'| at the boundary point e^{2 pi i p}."""
    if isinstance(m, PowerMap):
        return float(m.base)
    theta = 2 * math.pi * _as_float_turn(p)
    return float(derivative_at_theta(m, theta))


def derivative_at_theta(m: MapSpec, theta):
    theta = np.asarray(theta, dtype=float)
    if isinstance(m, PowerMap):
        return np.full(theta.shape, float(m.base))
    z = np.exp(1j * theta)
    return sum((1 - abs(a) ** 2) / np.abs(z - a) ** 2 for a in m.zeros)


def _lift_raw(m: Blaschke, theta):
    out = np.zeros_like(theta)
    for a in m.zeros:
        if a == 0:
            out = out + theta
        else:
            w = 1 - a * np.exp(-1j * theta)
            out = out + theta + math.pi - np.angle(a) + 2 * np.arctan2(w.imag, w.real)
    return out


def lift_offset(m: MapSpec) -> float:
    """Multiple of 2 pi removed so that S(0) lies in [0, 2 pi)."""
    if isinstance(m, PowerMap):
        return 0.0
    s0 = float(_lift_raw(m, np.zeros(1))[0])
    return 2 * math.pi * math.floor(s0 / (2 * math.pi))


def lifted_argument(m: MapSpec, theta):
    """Continuous lift S with t(e^{i theta}) = e^{i S(theta)}, S(0) in [0, 2 pi)."""
    scalar = np.isscalar(theta)
    th = np.asarray(theta, dtype=float)
    if isinstance(m, PowerMap):
        out = m.base * th
    else:
        out = _lift_raw(m, th) - lift_offset(m)
    return float(out) if scalar else out


def lifted_argument_mp(m: MapSpec, theta, prec: int = 200):
    """Same lift in mpmath arithmetic at ``prec`` bits."""
    import mpmath

    with mpmath.workprec(prec):
        th = mpmath.mpf(theta)
        if isinstance(m, PowerMap):
            return m.base * th
        total = mpmath.mpf(0)
        for a in m.zeros:
            if a == 0:
                total += th
            else:
                am = mpmath.mpc(a)
                w = 1 - am * mpmath.exp(-1j * th)
                total += th + mpmath.pi - mpmath.arg(am) + 2 * mpmath.atan2(w.imag, w.real)
        s0 = _lift_raw(m, np.zeros(1))[0]
        k = math.floor(s0 / (2 * math.pi))
        return total - 2 * mpmath.pi * k


def _as_float_turn(p) -> float:
    if is_exact(p):
        return float(reduce_turn(p))
    lo, hi = turn_bounds(p, 64)
    return float((lo + hi) / 2) % 1.0


# ---------------------------------------------------------------------------
# Big-precision points


def _mpfr_fraction(x) -> Fraction:
    n, d = x.as_integer_ratio()
    return Fraction(int(n), int(d))


def _log2_add(x: float, y: float) -> float:
    return float(np.logaddexp2(x, y))


def _pow2_fraction_up(l: float) -> Fraction:
    """A rational >= 2**l (within a factor 2)."""
    e = math.ceil(l)
    return Fraction(1 << e) if e >= 0 else Fraction(1, 1 << -e)


class ComplexAngle:
    """A boundary point held as a big complex number z with |z - e^{2 pi i t}| <= 2**lerr.

    The angular error in turns is at most a quarter of the complex error,
    since arcsin(e) <= pi e / 2 and one turn is 2 pi radians.  Errors are kept
    as base-2 logarithms because thousand-bit orbits underflow doubles.
    """

    __slots__ = ("z", "prec", "lerr")

    def __init__(self, z, prec: int, lerr: float):
        self.z = z
        self.prec = prec
        self.lerr = lerr

    @classmethod
    def from_turn(cls, x, prec: int) -> "ComplexAngle":
        x = reduce_turn(x)
        with gmpy2.context(gmpy2.get_context(), precision=prec + 8):
            t = mpfr(x.numerator) / x.denominator
            ang = 2 * gmpy2.const_pi() * t
            z = mpc(gmpy2.cos(ang), gmpy2.sin(ang))
        return cls(z, prec, 3.0 - prec)

    @classmethod
    def from_angle(cls, p, prec: int) -> "ComplexAngle":
        if isinstance(p, ComplexAngle):
            return p
        if is_exact(p):
            return cls.from_turn(p, prec)
        lo, hi = turn_bounds(p, prec + 8)
        base = cls.from_turn((lo + hi) / 2, prec)
        if hi > lo:
            # half-width in turns -> complex error, 2 pi w <= 8 w
            base.lerr = _log2_add(base.lerr, math.log2(hi - lo) + 2)
        return base

    @property
    def log2_err_turns(self) -> float:
        return _log2_add(self.lerr - 2, 4.0 - self.prec)

    def precision_bits(self) -> float:
        return -self.log2_err_turns

    def turn_bounds(self, bits: int = 0) -> tuple[Fraction, Fraction]:
        with gmpy2.context(gmpy2.get_context(), precision=self.prec):
            t = gmpy2.atan2(self.z.imag, self.z.real) / (2 * gmpy2.const_pi())
        t = _mpfr_fraction(t)
        t -= math.floor(t)
        e = _pow2_fraction_up(self.log2_err_turns)
        return t - e, t + e

    def __float__(self) -> float:
        return math.atan2(float(self.z.imag), float(self.z.real)) / (2 * math.pi) % 1.0

    def __repr__(self) -> str:
        return f"ComplexAngle({float(self):.17g}, bits={self.precision_bits():.1f})"


def _mpc_zero_data(m: Blaschke, prec: int):
    out = []
    with gmpy2.context(gmpy2.get_context(), precision=prec):
        for a in m.zeros:
            if a == 0:
                out.append(None)
            else:
                u = mpc(a)
                out.append((u, u.conjugate(), abs(u) / u))
    return out


def _blaschke_mpc(data, z):
    w = None
    for d in data:
        f = z if d is None else d[2] * (d[0] - z) / (1 - d[1] * z)
        w = f if w is None else w * f
    return w


def step_error(m: MapSpec, lerr: float, prec: int) -> float:
    """log2 of the complex error after one step from error 2**lerr."""
    err = 2.0 ** lerr if lerr > -1000 else 0.0
    if isinstance(m, PowerMap):
        grow = m.base * (1 + err) ** (m.base - 1)
        rounding = math.log2(4 * m.base.bit_length()) - prec
    else:
        dist = m.min_distance_to_circle
        if lerr + 6 >= math.log2(dist):
            raise PrecisionExhausted("error radius reaches the zeros of the map")
        grow = m.derivative_bound * (1 + 2 * err / dist) ** 2
        rounding = math.log2(16 * m.degree) - prec
    return _log2_add(math.log2(grow) + lerr, rounding) + 1e-9


def _step_complex(m: MapSpec, p: ComplexAngle, data=None) -> ComplexAngle:
    lerr = step_error(m, p.lerr, p.prec)
    with gmpy2.context(gmpy2.get_context(), precision=p.prec):
        if isinstance(m, PowerMap):
            w = p.z ** m.base
        else:
            w = _blaschke_mpc(data or _mpc_zero_data(m, p.prec), p.z)
            check_modulus(w, lerr, p.prec)
    return ComplexAngle(w, p.prec, lerr)


def check_modulus(w, lerr: float, prec: int):
    drift = abs(gmpy2.norm(w) - 1)
    if drift == 0:
        return
    ld = float(gmpy2.log2(drift))
    tol = max(lerr + 2, 16.0 - prec)
    if ld > tol or ld > -GUARD_BITS:
        raise ModulusDrift(f"log2 of |b(z)|^2 - 1 is {ld:.1f}, tolerance {tol:.1f}")


def apply(m: MapSpec, p, prec: int | None = None):
    """One boundary step t(p)."""
    if isinstance(m, PowerMap):
        if is_exact(p):
            return reduce_turn(as_fraction(p) * m.base)
        if isinstance(p, FixedAngle):
            return FixedAngle(p.mantissa * m.base, p.bits, p.err * m.base)
        if isinstance(p, DigitAngle) and p.next_base() == m.base:
            return p.shift()
    if not isinstance(p, ComplexAngle):
        work = prec or (int(min(precision_bits(p), 1 << 20)) + 64 if not is_exact(p) else 192)
        p = ComplexAngle.from_angle(p, work)
    return _step_complex(m, p)


# ---------------------------------------------------------------------------
# Sequences


class MapSequence:
    """Lazily indexed maps t_1, t_2, ... with a uniform contraction bound alpha.

    Kinds: ``constant``, ``periodic``, ``explicit`` (finite list plus a tail
    rule: ``repeat-last``, ``cycle`` or a fixed map), ``power`` (power maps
    driven by a base sequence) and ``converging-blaschke`` (t_n has zeros
    {0, 1 - 1/(n+1)^2}).
    """

    def __init__(self, kind: str, maps: Sequence[MapSpec] = (), *, tail="repeat-last",
                 bases: BaseSequence | None = None, alpha: float | None = None,
                 horizon: int | None = None, label: str | None = None,
                 max_modulus: float = 1 - 1e-12):
        self.kind = kind
        self.maps = tuple(map_from_config(m) for m in maps)
        self.tail = tail
        self.bases = bases
        self.horizon = horizon
        self.max_modulus = max_modulus
        if kind in ("constant", "periodic", "explicit"):
            if not self.maps:
                raise ValueError(f"{kind} sequence needs at least one map")
            if kind == "constant" and len(self.maps) != 1:
                raise ValueError("constant sequence takes exactly one map")
            if kind == "explicit" and not (tail in ("repeat-last", "cycle")
                                           or isinstance(tail, (PowerMap, Blaschke))):
                raise ValueError(f"unknown tail rule {tail!r}")
            known = list(self.maps) + ([tail] if isinstance(tail, (PowerMap, Blaschke)) else [])
            a_need = max(m.alpha for m in known)
        elif kind == "power":
            if bases is None:
                raise ValueError("power sequence needs bases")
            a_need = 0.0
        elif kind == "converging-blaschke":
            if horizon is None:
                raise ValueError("converging family needs a horizon")
            a_need = _converging_c(horizon + 1)
        else:
            raise ValueError(f"unknown sequence kind {kind!r}")
        if alpha is None:
            alpha = a_need
        if not 0 <= alpha < 1:
            raise ValueError("alpha must lie in [0, 1)")
        if alpha < a_need:
            raise ValueError(f"alpha {alpha} below the maps' contraction {a_need}")
        self.alpha = float(alpha)
        self.label = label or kind

    @classmethod
    def constant(cls, m: MapSpec, **kw) -> "MapSequence":
        return cls("constant", [m], **kw)

    @classmethod
    def periodic(cls, maps, **kw) -> "MapSequence":
        return cls("periodic", maps, **kw)

    @classmethod
    def explicit(cls, maps, tail="repeat-last", **kw) -> "MapSequence":
        return cls("explicit", maps, tail=tail, **kw)

    @classmethod
    def power(cls, bases: BaseSequence | Sequence[int] | int, **kw) -> "MapSequence":
        if isinstance(bases, int):
            bases = BaseSequence.constant(bases)
        elif not isinstance(bases, BaseSequence):
            bases = BaseSequence.periodic(bases)
        return cls("power", bases=bases, **kw)

    @classmethod
    def converging(cls, horizon: int, **kw) -> "MapSequence":
        return cls("converging-blaschke", horizon=horizon, **kw)

    @property
    def tau(self) -> float:
        return (1 - self.alpha) / 84

    def map_at(self, n: int) -> MapSpec:
        if n < 1:
            raise IndexError("maps are 1-indexed")
        k = self.kind
        if k == "constant":
            return self.maps[0]
        if k == "periodic":
            return self.maps[(n - 1) % len(self.maps)]
        if k == "explicit":
            if n <= len(self.maps):
                return self.maps[n - 1]
            if self.tail == "repeat-last":
                return self.maps[-1]
            if self.tail == "cycle":
                return self.maps[(n - 1) % len(self.maps)]
            return self.tail
        if k == "power":
            return PowerMap(self.bases.base(n))
        if n > self.horizon:
            raise IndexError(f"converging family only declared up to n = {self.horizon}")
        c = _converging_c(n + 1)
        return Blaschke((0, c), max_modulus=self.max_modulus)

    def __getitem__(self, n: int) -> MapSpec:
        return self.map_at(n)

    def power_bases(self) -> BaseSequence | None:
        """The base sequence when every map is a power map, else None."""
        if self.kind == "power":
            return self.bases
        if self.kind == "converging-blaschke":
            return None
        known = list(self.maps)
        if isinstance(self.tail, (PowerMap, Blaschke)):
            known.append(self.tail)
        if not all(isinstance(m, PowerMap) for m in known):
            return None
        if self.kind == "constant":
            return BaseSequence.constant(self.maps[0].base)
        if self.kind == "periodic" or (self.kind == "explicit" and self.tail == "cycle"):
            return BaseSequence.periodic([m.base for m in self.maps])
        if self.tail == "repeat-last":
            return BaseSequence.explicit([m.base for m in self.maps])
        return BaseSequence.explicit([m.base for m in self.maps] + [self.tail.base])

    def is_autonomous(self) -> bool:
        return self.kind == "constant" or (self.kind == "power" and self.bases.constant_base is not None)

    def derivative_bounds(self, N: int) -> np.ndarray:
        pb = self.power_bases()
        if pb is not None:
            return pb.bases(1, N).astype(float)
        return np.array([self.map_at(n).derivative_bound for n in range(1, N + 1)])

    def degrees(self, N: int) -> np.ndarray:
        pb = self.power_bases()
        if pb is not None:
            return pb.bases(1, N)
        return np.array([self.map_at(n).degree for n in range(1, N + 1)], dtype=np.int64)

    def to_config(self) -> dict:
        out = {"kind": self.kind, "alpha": self.alpha}
        if self.maps:
            out["maps"] = [m.to_config() for m in self.maps]
        if self.kind == "explicit":
            out["tail"] = self.tail if isinstance(self.tail, str) else self.tail.to_config()
        if self.bases is not None:
            out["bases"] = self.bases.to_config()
        if self.horizon is not None:
            out["horizon"] = self.horizon
        return out

    def __repr__(self) -> str:
        return f"MapSequence({self.label}, alpha={self.alpha:.6g})"


def _converging_c(n: int) -> float:
    return 1 - 1 / (n * n)


def precision_budget(seq: MapSequence, N: int) -> int:
    """Bits reserved for an orbit of length N: sum log2 D_k + 64."""
    if N <= 0:
        return 64
    return int(math.ceil(float(np.log2(seq.derivative_bounds(N)).sum()))) + 64


def orbit(seq: MapSequence, x, N: int, precision: int | None = None) -> Iterator:
    """Yield T_1(x), ..., T_N(x).

    Exact rationals under power maps stay exact, digit streams are shifted, and
    anything touching a Blaschke factor is carried as a :class:`ComplexAngle`
    at ``precision`` bits (default: the budget for N steps).
    """
    p = x
    work = precision or precision_budget(seq, N)
    cache: dict = {}
    for n in range(1, N + 1):
        m = seq.map_at(n)
        if isinstance(m, Blaschke) and not isinstance(p, ComplexAngle):
            p = ComplexAngle.from_angle(p, work)
        if isinstance(m, Blaschke):
            data = cache.get(m)
            if data is None:
                data = cache[m] = _mpc_zero_data(m, work)
            p = _step_complex(m, p, data)
        else:
            p = apply(m, p)
        if precision_bits(p) < MIN_QUERY_BITS:
            raise PrecisionExhausted("orbit precision exhausted", step=n)
        yield p
