"""Markov partitions and distortion statistics for centred finite Blaschke products.

Angles are in turns.  Level-n cylinders are stored through their endpoints in
the coordinate window [x, x + 1), x the generating fixed point, so every
cylinder is a plain interval and the order of cylinders is the lexicographic
order of itineraries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

from .circle import distance_turn_bounds
from .maps import Blaschke, MapSpec, PowerMap, apply, derivative_at_theta, lifted_argument, lifted_argument_mp

DEFAULT_MAX_LEVEL = 12
RESIDUAL_BITS = 60
MP_PREC = 256
FLOAT_RESOLUTION = 2.0 ** -50
REL_TOL = 0.01
MAX_SAMPLES = 1024
NOISE_LOG = 1e-9  # log-increments below this are float noise
VALIDATION_RTOL = 1e-8  # float round-off in forward iterates


class ResidualTooLarge(ArithmeticError):
    pass


def degree(m: MapSpec) -> int:
    return m.degree


def _lift_turn_mp(m: MapSpec, t):
    return lifted_argument_mp(m, 2 * mpmath.pi * t, MP_PREC) / (2 * mpmath.pi)


def _bisect_mp(f, level, lo, hi, iters: int = MP_PREC):
    """Root of the increasing function f(t) = level on [lo, hi]."""
    lo, hi = mpmath.mpf(lo), mpmath.mpf(hi)
    for _ in range(iters):
        mid = (lo + hi) / 2
        if f(mid) < level:
            lo = mid
        else:
            hi = mid
        if hi - lo < mpmath.mpf(2) ** (-(MP_PREC - 16)):
            break
    return (lo + hi) / 2


def _mpf_fraction(x) -> Fraction:
    man, exp = mpmath.mpf(x).man_exp
    return Fraction(int(man)) * Fraction(2) ** int(exp)


def _check_residual(m: MapSpec, p: Fraction, target: Fraction):
    img = apply(m, p, MP_PREC)
    hi = distance_turn_bounds(img, target, MP_PREC)[1]
    if hi >= Fraction(1, 1 << RESIDUAL_BITS):
        raise ResidualTooLarge(f"residual {float(hi):.3g} turns at {float(p)}")


def find_circle_fixed_points(m: MapSpec) -> list[Fraction]:
    """The degree - 1 boundary fixed points, ascending in [0, 1)."""
    N = m.degree
    if N < 2:
        raise ValueError("degree must be >= 2")
    if isinstance(m, PowerMap):
        return [Fraction(k, N - 1) for k in range(N - 1)]
    out = []
    with mpmath.workprec(MP_PREC):
        g = lambda t: _lift_turn_mp(m, t) - t  # noqa: E731
        g0 = g(mpmath.mpf(0))
        k0 = int(mpmath.ceil(g0))
        for k in range(k0, k0 + N - 1):
            t = _bisect_mp(g, k, 0, 1)
            p = _mpf_fraction(t) % 1
            _check_residual(m, p, p)
            out.append(p)
    return sorted(out)


def preimages(m: MapSpec, target) -> list[Fraction]:
    """The degree-many solutions of m(p) = target, ascending in [0, 1)."""
    target = Fraction(target) % 1
    N = m.degree
    if isinstance(m, PowerMap):
        return [(target + k) / N for k in range(N)]
    out = []
    with mpmath.workprec(MP_PREC):
        L = lambda t: _lift_turn_mp(m, t)  # noqa: E731
        L0 = L(mpmath.mpf(0))
        tq = mpmath.mpf(target.numerator) / target.denominator
        k0 = int(mpmath.ceil(L0 - tq))
        for k in range(k0, k0 + N):
            t = _bisect_mp(L, tq + k, 0, 1)
            p = _mpf_fraction(t) % 1
            _check_residual(m, p, target)
            out.append(p)
    return sorted(out)


# ---------------------------------------------------------------------------
# Float helpers (turn coordinates)


def lift_turns(m: MapSpec, t):
    return np.asarray(lifted_argument(m, 2 * math.pi * np.asarray(t, dtype=float))) / (2 * math.pi)


def forward(m: MapSpec, t):
    if isinstance(m, PowerMap):
        return np.mod(m.base * np.asarray(t, dtype=float), 1.0)
    return np.mod(lift_turns(m, t), 1.0)


def deriv(m: MapSpec, t):
    return derivative_at_theta(m, 2 * math.pi * np.asarray(t, dtype=float))


def iterate_derivative(m: MapSpec, t, n: int):
    """(|(f^n)'(t)|, f^n(t)) for float arrays t."""
    t = np.asarray(t, dtype=float)
    d = np.ones_like(t)
    for _ in range(n):
        d = d * deriv(m, t)
        t = forward(m, t)
    return d, t


# ---------------------------------------------------------------------------
# Partition


@dataclass
class Cylinder:
    level: int
    itinerary: tuple
    start: float
    length: float
    K: float = math.nan
    sup_deriv: float = math.nan


@dataclass
class CirclePartition:
    map: MapSpec
    fixed_point: Fraction
    level1: list  # exact preimage angles, ascending from the fixed point in [x, x + 1)
    endpoints: dict = field(default_factory=dict)  # level -> float array in [x, x + 1)

    @property
    def degree(self) -> int:
        return self.map.degree

    def arcs(self) -> list[tuple[Fraction, Fraction]]:
        pts = list(self.level1) + [self.fixed_point + 1]
        return [(a % 1, b - a) for a, b in zip(pts, pts[1:])]

    def cylinders(self, n: int) -> list[Cylinder]:
        E = self.endpoints[n]
        ends = np.append(E[1:], float(self.fixed_point) + 1.0)
        N = self.degree
        out = []
        for j, (a, b) in enumerate(zip(E, ends)):
            it = tuple(int(c) for c in np.base_repr(j, N).zfill(n)) if n else ()
            out.append(Cylinder(n, it, float(a) % 1.0, float(b - a)))
        return out


def build_partition(m: MapSpec) -> CirclePartition:
    if m.degree < 2:
        raise ValueError("degree must be >= 2")
    if isinstance(m, Blaschke) and m.alpha >= 1:
        raise ValueError("map must be centred with |a| < 1")
    x = find_circle_fixed_points(m)[0]
    pre = preimages(m, x)
    lifted = sorted(p if p >= x else p + 1 for p in pre)
    if lifted[0] != x and abs(float(lifted[0] - x)) > 2.0 ** -RESIDUAL_BITS:
        raise ResidualTooLarge("fixed point missing from its own preimages")
    lifted[0] = x
    part = CirclePartition(m, x, lifted)
    part.endpoints[1] = np.array([float(p) for p in lifted])
    return part


def _branch_bounds(part: CirclePartition):
    pts = [float(p) for p in part.level1] + [float(part.fixed_point) + 1.0]
    return np.array(pts[:-1]), np.array(pts[1:])


def _inverse_branch(part: CirclePartition, i: int, v: np.ndarray) -> np.ndarray:
    """phi_i(v): the t in U_i with f(t) = v, for v in [x, x + 1)."""
    m, x = part.map, float(part.fixed_point)
    lo_all, hi_all = _branch_bounds(part)
    lo0, hi0 = lo_all[i], hi_all[i]
    if isinstance(m, PowerMap):
        # U_i = [lo0, lo0 + 1/b); f(t) = b t, exact in binary for dyadic data
        return lo0 + (v - x) / m.base
    base = lift_turns(m, lo0)
    level = base + (v - x)
    lo = np.full(v.shape, lo0)
    hi = np.full(v.shape, hi0)
    for _ in range(64):
        mid = (lo + hi) / 2
        below = lift_turns(m, mid) < level
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return (lo + hi) / 2


def refine(part: CirclePartition, n: int, max_level: int = DEFAULT_MAX_LEVEL) -> list[Cylinder]:
    """All level-n cylinders in itinerary order."""
    if n < 1 or n > max_level:
        raise ValueError(f"level must lie in 1..{max_level}")
    N = part.degree
    for k in range(2, n + 1):
        if k in part.endpoints:
            continue
        prev = part.endpoints[k - 1]
        E = np.concatenate([_inverse_branch(part, i, prev) for i in range(N)])
        widths = np.diff(np.append(E, float(part.fixed_point) + 1.0))
        if widths.min() < 2 * FLOAT_RESOLUTION:
            raise ArithmeticError(f"level {k} cylinders below working resolution")
        part.endpoints[k] = E
    return part.cylinders(n)


def markov_check(part: CirclePartition, n: int, tol: float = 1e-9) -> float:
    """Max endpoint error of f(J_n(i0 i1 ...)) = J_{n-1}(i1 ...)."""
    if n < 2:
        return 0.0
    refine(part, n)
    E = part.endpoints[n]
    prev = np.append(part.endpoints[n - 1], float(part.fixed_point) + 1.0)
    M = len(part.endpoints[n - 1])
    j = np.arange(len(E))
    img = forward(part.map, E)
    want = np.mod(prev[j % M], 1.0)
    d = np.abs(np.mod(img - want + 0.5, 1.0) - 0.5)
    return float(d.max())


# ---------------------------------------------------------------------------
# Derivative bounds over cylinders


def cylinder_extrema(m: MapSpec, starts: np.ndarray, lengths: np.ndarray, n: int,
                     tol: float = REL_TOL, max_samples: int = MAX_SAMPLES):
    """(K, sup, samples) of |(f^n)'| per cylinder by adaptive sampling.

    Sample counts double until inf and sup move less than ``tol`` (relative).
    """
    k = 8
    prev = None
    while True:
        q = np.linspace(0.0, 1.0, k + 1)
        pts = starts[:, None] + lengths[:, None] * q[None, :]
        d, _ = iterate_derivative(m, pts, n)
        lo, hi = d.min(axis=1), d.max(axis=1)
        if prev is not None:
            plo, phi = prev
            if np.all(np.abs(lo - plo) <= tol * lo) and np.all(np.abs(hi - phi) <= tol * hi):
                return lo, hi, k + 1
        if k >= max_samples:
            return lo, hi, k + 1
        prev = (lo, hi)
        k *= 2


def conformality_ratios(m: MapSpec, starts, lengths, K, n: int, rng, count: int):
    """Image radius of B(x0, s) over K s for random balls inside random cylinders."""
    idx = rng.integers(0, len(starts), size=count)
    q = rng.integers(1, 1024, size=count) / 1024.0
    sig = rng.integers(1, 8, size=count) / 8.0
    a, L = starts[idx], lengths[idx]
    x0 = a + L * q
    s = L * np.minimum(q, 1 - q) * sig
    _, lo = iterate_derivative(m, x0 - s, n)
    _, hi = iterate_derivative(m, x0 + s, n)
    img = np.mod(hi - lo, 1.0)
    return img / 2 / (K[idx] * s)


@dataclass
class LevelStats:
    level: int
    cylinders: int
    distortion: float
    koebe_max: float
    koebe_min: float
    conformal_max: float
    conformal_min: float
    sum_inv_K: float
    total_length: float
    samples: int

    @property
    def koebe_constant(self) -> float:
        return max(self.koebe_max, 1 / self.koebe_min)

    @property
    def conformal_constant(self) -> float:
        return max(self.conformal_max, 1 / self.conformal_min)


def level_statistics(part: CirclePartition, n: int, seed: int = 0, conformal_samples: int = 256):
    cyl = refine(part, n)
    starts = part.endpoints[n]
    lengths = np.array([c.length for c in cyl])
    K, S, ns = cylinder_extrema(part.map, starts, lengths, n)
    for c, k, s in zip(cyl, K, S):
        c.K, c.sup_deriv = float(k), float(s)
    rng = np.random.default_rng([seed, n])
    conf = conformality_ratios(part.map, starts, lengths, K, n, rng, conformal_samples)
    st = LevelStats(
        level=n, cylinders=len(cyl),
        distortion=float((S / K).max()),
        koebe_max=float((S * lengths).max()), koebe_min=float((K * lengths).min()),
        conformal_max=float(conf.max()), conformal_min=float(conf.min()),
        sum_inv_K=float((1 / K).sum()), total_length=float(lengths.sum()), samples=ns)
    return st, cyl


def contraction_rate(m: MapSpec, grid: int = 1 << 12) -> float:
    """1 / min |f'| over a grid: the worst per-level shrink factor of cylinder lengths."""
    return float(1.0 / deriv(m, np.arange(grid) / grid).min())


def extrapolate_level_bound(values, levels, split: int, rho: float) -> dict:
    """Limit bound for a statistic from its values at levels <= split.

    Log-distortion increments are controlled by cylinder lengths, which shrink
    by at least the factor ``rho`` per level.  The log-increments are therefore
    treated as a geometric tail: log C = log v_split + d rho / (1 - rho), with
    d the last positive training increment and rho raised to the observed
    increment ratio when that is larger.
    """
    v = dict(zip(levels, values))
    train = [(k, v[k]) for k in sorted(v) if k <= split]
    if len(train) < 3:
        raise ValueError("need at least three training levels")
    logs = np.log([x for _, x in train])
    d = np.diff(logs)
    d[np.abs(d) < NOISE_LOG] = 0.0
    obs = [d[i] / d[i - 1] for i in range(1, len(d)) if d[i - 1] > 0 and d[i] > 0]
    r = max([rho] + obs[-2:])
    if r >= 1:
        return {"C": math.inf, "rho": r}
    tail = max(d[-1], 0.0) * r / (1 - r)
    C = float(max(max(x for _, x in train), math.exp(logs[-1] + tail)))
    return {"C": C, "rho": r}


def fit_level_constant(series: dict, levels, split: int, rho: float) -> dict:
    """One constant from levels <= split that must bound every statistic on levels > split."""
    per = {name: extrapolate_level_bound(vals, levels, split, rho) for name, vals in series.items()}
    C = max(p["C"] for p in per.values())
    viol = []
    for name, vals in series.items():
        for k, x in zip(levels, vals):
            if k > split and x > C * (1 + VALIDATION_RTOL):
                viol.append({"statistic": name, "level": k, "value": x})
    tested = any(k > split for k in levels)
    return {"C_fit": C, "split": split, "per_statistic": per, "violations": viol,
            "pass": tested and not viol and math.isfinite(C)}


def distortion_certificate(m: MapSpec, max_level: int = DEFAULT_MAX_LEVEL, seed: int = 0,
                           conformal_samples: int = 256):
    """Per-level statistics, fitted constants and a PASS/FAIL verdict."""
    part = build_partition(m)
    levels, stats, cylinders = [], [], []
    for n in range(1, max_level + 1):
        st, cyl = level_statistics(part, n, seed, conformal_samples)
        levels.append(n)
        stats.append(st)
        cylinders.extend(cyl)
    split = max_level // 2
    series = {
        "distortion": [s.distortion for s in stats],
        "koebe": [s.koebe_constant for s in stats],
        "conformality": [s.conformal_constant for s in stats],
    }
    fit = fit_level_constant(series, levels, split, contraction_rate(m))
    sums = [s.sum_inv_K for s in stats]
    sum_ratio = max(sums) / min(sums)
    markov_err = max(markov_check(part, n) for n in range(2, min(6, max_level) + 1)) if max_level >= 2 else 0.0
    verdict = fit["pass"] and sum_ratio <= 2
    report = {
        "map": m.to_config(),
        "fixed_point": float(part.fixed_point),
        "level1": [float(p) % 1 for p in part.level1],
        "max_level": max_level,
        "levels": [s.__dict__ | {"koebe_constant": s.koebe_constant,
                                 "conformal_constant": s.conformal_constant} for s in stats],
        "fit": fit,
        "sum_inv_K_ratio": sum_ratio,
        "sum_inv_K_bounded": sum_ratio <= 2,
        "markov_property_max_error": markov_err,
        "verdict": "PASS" if verdict else "FAIL",
    }
    return report, cylinders
