"""Mixing coefficients |lambda(A cap F_n^{-1} E)/lambda(E) - lambda(A)|.

Arcs here are half-open turn intervals [start, start + length).  Empirical
estimates treat them as open balls, which differs only on a null set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import batch
from .circle import Arc, PiMultiple
from .maps import MapSequence
from .recurrence import make_engine, point_bits
from .schedules import golden_turn_bounds

NOISE_SE = 3.0


class DegenerateFit(ValueError):
    """Too few deviations above the noise floor to fit a decay rate."""


@dataclass(frozen=True)
class TurnInterval:
    start: Fraction
    length: Fraction
    label: str = ""

    def __post_init__(self):
        if not 0 < self.length <= 1:
            raise ValueError("interval length must lie in (0, 1]")
        object.__setattr__(self, "start", Fraction(self.start) % 1)

    @property
    def measure(self) -> Fraction:
        return self.length

    def as_arc(self) -> Arc:
        return Arc(self.start + self.length / 2, PiMultiple(self.length))

    def is_dyadic(self) -> bool:
        return all(_is_pow2(q.denominator) for q in (self.start, self.length))

    def to_config(self) -> dict:
        return {"start": str(self.start), "length": str(self.length), "label": self.label}


def _is_pow2(q: int) -> bool:
    return q & (q - 1) == 0


def dyadic_arcs(level: int) -> list[TurnInterval]:
    k = 1 << level
    return [TurnInterval(Fraction(i, k), Fraction(1, k), f"dyadic[{i}/{k}]") for i in range(k)]


def golden_arcs(bits: int = 64) -> list[TurnInterval]:
    """Four arcs starting at frac(k g), g the golden turn, rounded to 2**-bits."""
    g = golden_turn_bounds(bits)[0]
    lengths = (Fraction(1, 2), Fraction(1, 3), Fraction(1, 5), Fraction(1, 7))
    out = []
    for k, L in enumerate(lengths, start=1):
        s = (k * g) % 1
        out.append(TurnInterval(s, L, f"golden[{k}g,{L}]"))
    return out


def default_family() -> list[TurnInterval]:
    return dyadic_arcs(2) + golden_arcs()


# ---------------------------------------------------------------------------
# Exact dyadic oracle


def _overlap_prefix(t: Fraction, E: TurnInterval) -> Fraction:
    """lambda([0, t) cap E) for t in [0, 1]."""
    s, L = E.start, E.length
    total = Fraction(0)
    for a, b in ((s, min(s + L, 1)), (0, max(Fraction(0), s + L - 1))):
        lo, hi = max(a, 0), min(b, t)
        if hi > lo:
            total += hi - lo
    return total


def _preimage_prefix(t: Fraction, E: TurnInterval, B: int) -> Fraction:
    """lambda([0, t) cap F^{-1}E) for F(x) = B x mod 1 and t >= 0."""
    u = t * B
    whole = math.floor(u)
    return (whole * E.length + _overlap_prefix(u - whole, E)) / B


def dyadic_exact_mixing(seq: MapSequence, A: TurnInterval, E: TurnInterval, n: int) -> Fraction:
    """Exact deviation for doubling-map compositions and dyadic arcs."""
    bases = seq.power_bases()
    if bases is None or any(bases.base(i) != 2 for i in range(1, n + 1)):
        raise ValueError("dyadic oracle needs base-2 power maps")
    if not (A.is_dyadic() and E.is_dyadic()):
        raise ValueError("dyadic oracle needs dyadic arcs")
    B = 1 << n
    a0, a1 = A.start, A.start + A.length
    inter = _preimage_prefix(a1, E, B) - _preimage_prefix(a0, E, B)
    return abs(inter / E.length - A.length)


# ---------------------------------------------------------------------------
# Empirical coefficients


@dataclass
class PairDeviation:
    n: int
    a: int
    e: int
    deviation: float
    se: float
    points_in_a: int

    @property
    def pair_id(self) -> str:
        return f"{self.a}-{self.e}"


@dataclass
class MixingReport:
    rows: list
    pairs: list
    family: list
    tau_theory: float
    fit: dict = field(default_factory=dict)
    bound: dict = field(default_factory=dict)

    def sup_rows(self) -> list[tuple[int, float, float]]:
        """(n, sup deviation, SE of the maximising pair)."""
        out = {}
        for p in self.pairs:
            cur = out.get(p.n)
            if cur is None or p.deviation > cur[1]:
                out[p.n] = (p.n, p.deviation, p.se)
        return [out[k] for k in sorted(out)]


def _pair_stats(inA, inE, A: TurnInterval, E: TurnInterval):
    m = int(inA.sum())
    if m == 0:
        raise ValueError(f"no sample points in arc {A.label}")
    p = float((inA & inE).sum()) / m
    la, le = float(A.measure), float(E.measure)
    dev = abs(p * la / le - la)
    se = la / le * math.sqrt(max(p * (1 - p), 1.0 / m) / m)
    return dev, se, m


def mixing_scan(seq: MapSequence, ns, family=None, resolution: int = 10 ** 5,
                method: str = "grid", seed: int = 0, precision: int | None = None) -> MixingReport:
    """All (A, E) pairs of ``family`` at each n in ``ns`` (one orbit pass)."""
    if resolution < 10 ** 4:
        raise ValueError("resolution must be >= 1e4")
    family = list(family or default_family())
    ns = sorted(set(int(n) for n in ns))
    if ns and ns[0] < 0:
        raise ValueError("n must be >= 0")
    N = max(ns) if ns else 0
    bits = point_bits(seq, N)
    if method == "grid":
        pts = batch.PointSet.grid(resolution, bits)
    else:
        pts = batch.PointSet.random(seed, resolution, bits)
    eng = make_engine(seq, pts, max(N, 1), precision)
    arcs = [f.as_arc() for f in family]
    in_start = [eng.in_arc(0, a) for a in arcs]
    pairs = []
    for n in ns:
        in_img = in_start if n == 0 else [eng.in_arc(n, a) for a in arcs]
        for i, A in enumerate(family):
            for j, E in enumerate(family):
                dev, se, m = _pair_stats(in_start[i], in_img[j], A, E)
                pairs.append(PairDeviation(n, i, j, dev, se, m))
    rep = MixingReport([], pairs, family, seq.tau)
    rep.rows = rep.sup_rows()
    return rep


def empirical_mixing_coefficient(seq: MapSequence, n: int, arcs, sets, resolution: int = 10 ** 5,
                                 method: str = "grid", seed: int = 0) -> dict:
    """sup over (A, E) in arcs x sets of the estimated deviation at time n."""
    arcs, sets = list(arcs), list(sets)
    rep = mixing_scan(seq, [n], arcs + sets, resolution, method, seed)
    na = len(arcs)
    per = [p for p in rep.pairs if p.a < na and p.e >= na]
    best = max(per, key=lambda p: p.deviation)
    return {"n": n, "sup": best.deviation, "se": best.se,
            "pairs": [(p.a, p.e - na, p.deviation, p.se) for p in per]}


def grid_half_width(seq: MapSequence, n: int, E: TurnInterval, resolution: int) -> float:
    """Grid error bound on a deviation: boundary cells of A cap F_n^{-1}E over lambda(E)."""
    comps = 2 + 2 * int(math.prod(int(d) for d in seq.degrees(n))) if n else 4
    return comps / resolution / float(E.measure)


# ---------------------------------------------------------------------------
# Decay fits


def fit_exponential_decay(rows, noise=None) -> dict:
    """Least squares of ln(deviation) on n over rows above the noise floor.

    ``rows`` are (n, deviation) or (n, deviation, se); ``noise`` overrides the
    per-row floor of 3 SE.
    """
    pts = []
    for r in rows:
        n, d = r[0], r[1]
        floor = noise if noise is not None else (NOISE_SE * r[2] if len(r) > 2 else 0.0)
        if d > floor and d > 0:
            pts.append((n, math.log(d)))
    if len(pts) < 5:
        raise DegenerateFit("mixing faster than measurable: fewer than 5 deviations above noise floor")
    x = np.array([p[0] for p in pts], dtype=float)
    y = np.array([p[1] for p in pts])
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ np.array([slope, icpt])
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1 - float(((y - pred) ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return {"tau_emp": float(-slope), "K_emp": float(math.exp(icpt)), "r2": r2,
            "non_exponential": r2 < 0.9, "rows_used": len(pts)}


def fit_and_validate(rows, tau: float, split: int) -> dict:
    """K_fit = max over n <= split of dev e^{n tau}; check dev <= K_fit e^{-n tau} for n > split."""
    train = [(n, d) for n, d, *_ in rows if n <= split]
    test = [(n, d) for n, d, *_ in rows if n > split]
    K = max(d * math.exp(n * tau) for n, d in train)
    viol = [(n, d, K * math.exp(-n * tau)) for n, d in test if d > K * math.exp(-n * tau)]
    return {"K_fit": K, "tau": tau, "split": split, "violations": viol, "pass": not viol and bool(test)}


def analyse(rep: MixingReport, split: int | None = None) -> MixingReport:
    rows = [r for r in rep.rows if r[0] >= 1]
    if split is None:
        split = max(r[0] for r in rows) // 2
    rep.bound = fit_and_validate(rows, rep.tau_theory, split)
    try:
        rep.fit = fit_exponential_decay(rows)
        rep.fit["status"] = "ok"
    except DegenerateFit as e:
        rep.fit = {"status": "faster-than-measurable", "message": str(e), "tau_emp": math.inf}
    return rep
