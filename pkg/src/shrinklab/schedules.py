"""Radius and centre generators shared by the shrinking-target and recurrence code.

Radii are radians in (0, pi].  Families whose radii are rational multiples of
pi keep that exact form, which lets hit tests compare integers instead of
floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np

from .circle import PiMultiple, validate_radius

_INT63 = (1 << 63) - 1


def _as_ratio(x) -> Fraction | None:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    return None


@dataclass(frozen=True)
class RadiusGenerator:
    """r_n for n >= 1.

    Families (``kind``):
      constant   r_n = value (radians) or pi * scale
      power-law  r_n = pi * scale / n**exponent  (harmonic: exponent 1)
      geometric  r_n = pi * scale * ratio**n
      explicit   r_n = values[n-1], last value repeated
    """

    kind: str
    scale: object = 1
    exponent: float = 1
    ratio: object = Fraction(1, 2)
    value: float | None = None
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant", "power-law", "harmonic", "geometric", "explicit"):
            raise ValueError(f"unknown radius family {self.kind!r}")
        if self.kind == "harmonic":
            object.__setattr__(self, "kind", "power-law")
            object.__setattr__(self, "exponent", 1)
        if self.kind == "explicit":
            if not self.values:
                raise ValueError("explicit radii need values")
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
            for v in self.values:
                validate_radius(v)
        if self.kind == "power-law" and self.exponent < 0:
            raise ValueError("exponent must be non-negative")
        if self.kind == "geometric" and not 0 < float(self.ratio) <= 1:
            raise ValueError("geometric ratio must lie in (0, 1]")
        # the largest radius occurs at n = 1 for every family except explicit
        if self.kind != "explicit":
            validate_radius(self.radius(1))

    # -- exact form ---------------------------------------------------------

    def _scale_ratio(self) -> Fraction | None:
        return _as_ratio(self.scale)

    def pi_coefficient(self, n: int) -> Fraction | None:
        """r_n / pi as an exact rational, when the family allows it."""
        s = self._scale_ratio()
        if self.kind == "constant":
            return None if self.value is not None or s is None else s
        if self.kind == "power-law":
            if s is None or float(self.exponent) != int(self.exponent):
                return None
            return s / Fraction(n) ** int(self.exponent)
        if self.kind == "geometric":
            q = _as_ratio(self.ratio)
            if s is None or q is None:
                return None
            return s * q ** n
        return None

    def radius(self, n: int):
        """r_n as PiMultiple when exact, else a float in radians."""
        if n < 1:
            raise IndexError("radii are 1-indexed")
        c = self.pi_coefficient(n)
        if c is not None:
            return validate_radius(PiMultiple(c))
        if self.kind == "constant":
            v = self.value if self.value is not None else float(self.scale) * math.pi
        elif self.kind == "power-law":
            v = math.pi * float(self.scale) / n ** float(self.exponent)
        elif self.kind == "geometric":
            v = math.pi * float(self.scale) * float(self.ratio) ** n
        else:
            v = self.values[min(n, len(self.values)) - 1]
        return validate_radius(v)

    def __call__(self, n: int):
        return self.radius(n)

    def radii_float(self, n: np.ndarray) -> np.ndarray:
        n = np.asarray(n, dtype=np.int64)
        if self.kind == "constant":
            v = self.value if self.value is not None else float(self.scale) * math.pi
            out = np.full(n.shape, v, dtype=float)
        elif self.kind == "power-law":
            out = math.pi * float(self.scale) / n.astype(float) ** float(self.exponent)
        elif self.kind == "geometric":
            out = math.pi * float(self.scale) * float(self.ratio) ** n.astype(float)
        else:
            v = np.asarray(self.values)
            out = v[np.minimum(n, len(v)) - 1]
        if np.any(out <= 0) or np.any(out > math.pi * (1 + 1e-15)):
            raise ValueError("radius outside (0, pi]")
        return out

    def measures(self, n: np.ndarray) -> np.ndarray:
        """r_n / pi."""
        return np.minimum(self.radii_float(n) / math.pi, 1.0)

    @property
    def is_monotone(self) -> bool:
        if self.kind == "explicit":
            return all(b <= a for a, b in zip(self.values, self.values[1:]))
        return True

    def summable(self) -> bool | None:
        """Whether sum r_n converges (None when unknown)."""
        if self.kind == "constant":
            return False
        if self.kind == "power-law":
            return float(self.exponent) > 1
        if self.kind == "geometric":
            return float(self.ratio) < 1
        return None

    def scaled_half_bounds(self, n: np.ndarray, S: int) -> tuple[np.ndarray, np.ndarray]:
        """Integer arrays hf <= S * r_n / (2 pi) <= hc."""
        n = np.asarray(n, dtype=np.int64)
        exact = self.kind != "explicit" and self._scale_ratio() is not None and (
            self.kind != "power-law" or float(self.exponent) == int(self.exponent))
        if exact and self.kind in ("power-law", "constant") and self.value is None:
            s = self._scale_ratio()
            p = int(self.exponent) if self.kind == "power-law" else 0
            nmax = int(n.max()) if n.size else 1
            if s.numerator * S < _INT63 and s.denominator * 2 * nmax ** p < _INT63:
                num = np.int64(s.numerator * S)
                den = np.int64(2 * s.denominator) * n ** p
                return num // den, -((-num) // den)
        h = self.radii_float(n) / (2 * math.pi) * S
        pad = np.maximum(h * 2.0 ** -48, 0) + 4
        return np.floor(h - pad).astype(np.int64), np.ceil(h + pad).astype(np.int64)

    def phi_terms(self, N: int) -> np.ndarray:
        return self.measures(np.arange(1, N + 1))

    def to_config(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "constant" and self.value is not None:
            out["value"] = self.value
        elif self.kind == "explicit":
            out["values"] = list(self.values)
        else:
            out["scale"] = str(self.scale) if isinstance(self.scale, Fraction) else self.scale
        if self.kind == "power-law":
            out["exponent"] = self.exponent
        if self.kind == "geometric":
            out["ratio"] = str(self.ratio) if isinstance(self.ratio, Fraction) else self.ratio
        return out


def radius_from_config(cfg: dict) -> RadiusGenerator:
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    if "scale" in cfg:
        cfg["scale"] = _parse_number(cfg["scale"])
    if "ratio" in cfg:
        cfg["ratio"] = _parse_number(cfg["ratio"])
    if "values" in cfg:
        cfg["values"] = tuple(cfg["values"])
    return RadiusGenerator(kind, **cfg)


def _parse_number(v):
    if isinstance(v, str):
        return Fraction(v)
    if isinstance(v, int):
        return Fraction(v)
    return v


_GOLDEN_CACHE: dict = {}


def golden_turn_bounds(bits: int = 256) -> tuple[Fraction, Fraction]:
    """Rational bounds around frac((1 + sqrt 5)/2) = 0.6180339887..."""
    if bits not in _GOLDEN_CACHE:
        with mpmath.workprec(bits + 32):
            g = (mpmath.sqrt(5) - 1) / 2
            m = int(mpmath.floor(g * mpmath.mpf(2) ** bits))
        _GOLDEN_CACHE[bits] = (Fraction(m, 1 << bits), Fraction(m + 1, 1 << bits))
    return _GOLDEN_CACHE[bits]


@dataclass(frozen=True)
class GoldenAngle:
    """The irrational turn (sqrt 5 - 1)/2 as a lazily refinable angle."""

    def turn_bounds(self, bits: int = 64):
        return golden_turn_bounds(max(bits, 64) + 8)

    def precision_bits(self) -> float:
        return math.inf

    def __float__(self) -> float:
        return (math.sqrt(5) - 1) / 2

    def __repr__(self) -> str:
        return "GoldenAngle()"


@dataclass(frozen=True)
class CenterGenerator:
    """x_n: a fixed angle, or an explicit list of rationals cycled."""

    fixed: object = None
    values: tuple = ()

    def __post_init__(self):
        if (self.fixed is None) == (not self.values):
            raise ValueError("give either a fixed centre or a list of centres")

    def center(self, n: int):
        if self.fixed is not None:
            return self.fixed
        return self.values[(n - 1) % len(self.values)]

    def __call__(self, n: int):
        return self.center(n)

    def scaled_bounds(self, n: np.ndarray, S: int) -> tuple[np.ndarray, np.ndarray]:
        """Integer arrays cl <= S * x_n <= ch (x_n taken in [0, 1))."""
        n = np.asarray(n, dtype=np.int64)
        pts = [self.fixed] if self.fixed is not None else list(self.values)
        lo, hi = [], []
        for p in pts:
            a, b = _bounds(p)
            lo.append(math.floor(a * S))
            hi.append(math.ceil(b * S))
        lo = np.array(lo, dtype=np.int64)
        hi = np.array(hi, dtype=np.int64)
        if self.fixed is not None:
            return np.full(n.shape, lo[0]), np.full(n.shape, hi[0])
        idx = (n - 1) % len(pts)
        return lo[idx], hi[idx]

    def to_config(self):
        if isinstance(self.fixed, GoldenAngle):
            return {"fixed": "golden"}
        if self.fixed is not None:
            return {"fixed": str(self.fixed)}
        return {"values": [str(v) for v in self.values]}


def _bounds(p):
    if isinstance(p, (Fraction, int)):
        x = Fraction(p) % 1
        return x, x
    if isinstance(p, float):
        x = Fraction(p) % 1
        return x, x
    a, b = p.turn_bounds(256)
    k = math.floor(a)
    return a - k, b - k


def center_from_config(cfg) -> CenterGenerator:
    if isinstance(cfg, dict):
        if "fixed" in cfg:
            return CenterGenerator(fixed=parse_angle(cfg["fixed"]))
        return CenterGenerator(values=tuple(parse_angle(v) for v in cfg["values"]))
    return CenterGenerator(fixed=parse_angle(cfg))


def parse_angle(v):
    if isinstance(v, str) and v.strip().lower() == "golden":
        return GoldenAngle()
    if isinstance(v, str):
        return Fraction(v) % 1
    if isinstance(v, (int, Fraction)):
        return Fraction(v) % 1
    if isinstance(v, float):
        return Fraction(v) % 1
    return v
