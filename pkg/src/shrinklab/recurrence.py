"""Recurrence building blocks A_n = {x : d(T_n x, x) < r_n}."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import nnls

from . import batch
from .cantor import DigitStream
from .circle import Arc, BoundaryTie, PiMultiple, PrecisionExhausted, arc_contains, half_turn_bounds
from .maps import MapSequence, ModulusDrift, orbit, precision_budget
from .schedules import RadiusGenerator
from .shrink import SampleFailure, dyadic_start, failure_step, stream_limit
from .stats import mean_se, proportion_se

Z95 = 1.959963984540054

RadiusSchedule = RadiusGenerator


@dataclass
class MeasureEstimate:
    """Certified interval [value - half_width, value + half_width] inside [0, 1].

    ``raw`` is the plain fraction of points; ``raw_half_width`` the unclipped
    grid-resolution or 95% CLT half-width around it.
    """

    value: float
    half_width: float
    method: str
    raw: float = math.nan
    raw_half_width: float = math.nan
    points: int = 0

    @classmethod
    def from_raw(cls, raw: float, hw: float, method: str, points: int) -> "MeasureEstimate":
        lo, hi = max(0.0, raw - hw), min(1.0, raw + hw)
        return cls((lo + hi) / 2, (hi - lo) / 2, method, raw, hw, points)

    @classmethod
    def exact(cls, value: float) -> "MeasureEstimate":
        return cls(value, 0.0, "exact", value, 0.0, 0)

    def contains(self, v: float, tol: float = 0.0) -> bool:
        return self.value - self.half_width - tol <= v <= self.value + self.half_width + tol


def _radius(r):
    if isinstance(r, PiMultiple):
        return r
    return float(r)


def _is_full(r) -> bool:
    if isinstance(r, PiMultiple):
        return r.coef >= 1
    return float(r) >= math.pi


def is_recurrent_at(seq: MapSequence, x, n: int, r, precision: int | None = None) -> bool:
    if isinstance(x, DigitStream):
        x = x.angle()
    p = None
    for p in orbit(seq, x, n, precision):
        pass
    if p is None:
        p = x
    ties = "raise" if hasattr(x, "stream") else "open"
    return arc_contains(Arc(x, _radius(r)), p, ties=ties)


def exact_An_measure_power(B_n: int, r) -> float:
    """lambda(A_n) for x -> B_n x mod 1: (B_n - 1) evenly spaced intervals of total length r/pi."""
    if B_n < 2:
        raise ValueError("B_n must be >= 2")
    return min(1.0, float(r) / math.pi)


def component_count(seq: MapSequence, n: int) -> int:
    """Number of interval components of A_n: prod(degrees) - 1."""
    return int(math.prod(int(d) for d in seq.degrees(n))) - 1


# ---------------------------------------------------------------------------
# Point evaluation engine


class _PowerEngine:
    """Exact dyadic points under power maps: T_n X = B_n X mod 2**bits."""

    def __init__(self, seq: MapSequence, pts: batch.PointSet):
        self.bases = seq.power_bases()
        self.pts = pts
        self.S = pts.S

    def image(self, n: int):
        return batch.mul_mod_pow2(self.pts.X, self.bases.product(n), self.pts.bits)

    def recurrent(self, n: int, r) -> np.ndarray:
        X = self.pts.X
        D = batch.mul_mod_pow2(X, self.bases.product(n) - 1, self.pts.bits)
        hl, hh = half_turn_bounds(_radius(r))
        S = self.S
        hf, hc = math.floor(hl * S), math.ceil(hh * S)
        if D.dtype == object:
            m = [min(int(d), S - int(d)) for d in D]
            inside = np.array([v < hf for v in m], dtype=bool)
            amb = np.array([hf <= v <= hc for v in m], dtype=bool)
        else:
            A = np.mod(D + np.int64(hf), np.int64(S))
            inside, amb = batch.classify(A, np.int64(hc - hf), 2 * hf - 1, 2 * hc, S)
        for i in np.flatnonzero(amb):
            x = self.pts.fraction(int(i))
            tx = (x * self.bases.product(n)) % 1
            inside[i] = arc_contains(Arc(x, _radius(r)), tx)
        return inside

    def in_arc(self, n: int, arc: Arc) -> np.ndarray:
        T = self.pts.X if n == 0 else self.image(n)
        inside, amb = batch.int_arc_member(T, arc, self.S)
        for i in np.flatnonzero(amb):
            inside[i] = arc_contains(arc, Fraction(int(T[i]), self.S))
        return inside


class _ComplexEngine:
    """Big-precision batch orbit advanced step by step."""

    def __init__(self, seq: MapSequence, pts: batch.PointSet, N: int, precision: int | None):
        self.prec = precision or precision_budget(seq, N)
        self.starts = pts.fractions()
        self.start_f = pts.floats()
        self.cb = batch.ComplexBatch(seq, self.starts, self.prec)
        self.N = N

    def advance(self, n: int):
        while self.cb.n < n:
            self.cb.step()

    def recurrent(self, n: int, r) -> np.ndarray:
        self.advance(n)
        theta = self.cb.turns()
        h = float(r) / (2 * math.pi)
        inside, amb = batch.float_member(theta, self.start_f, h, self.cb.float_guard() + 2.0 ** -50)
        for i in np.flatnonzero(amb):
            inside[i] = arc_contains(Arc(self.starts[i], _radius(r)), self.cb.angle(int(i)))
        return inside

    def in_arc(self, n: int, arc: Arc) -> np.ndarray:
        if n == 0:
            theta, guard = self.start_f, 2.0 ** -50
        else:
            self.advance(n)
            theta, guard = self.cb.turns(), self.cb.float_guard() + 2.0 ** -50
        c = float(arc.center) % 1.0
        h = float(arc.radius) / (2 * math.pi)
        inside, amb = batch.float_member(theta, c, h, guard)
        for i in np.flatnonzero(amb):
            p = self.starts[i] if n == 0 else self.cb.angle(int(i))
            inside[i] = arc_contains(arc, p)
        return inside


def make_engine(seq: MapSequence, pts: batch.PointSet, N: int, precision: int | None = None):
    if seq.power_bases() is not None:
        return _PowerEngine(seq, pts)
    return _ComplexEngine(seq, pts, N, precision)


def make_points(method: str, resolution: int, seed: int = 0, bits: int = 62) -> batch.PointSet:
    if resolution < 1000:
        raise ValueError("resolution must be >= 1000")
    if method == "grid":
        return batch.PointSet.grid(resolution, bits)
    if method in ("monte-carlo", "mc"):
        return batch.PointSet.random(seed, resolution, bits)
    raise ValueError(f"unknown method {method!r}")


KEEP_BITS = 20


def point_bits(seq: MapSequence, n: int) -> int:
    """Dyadic point resolution: 62 bits (int64 path) while B_n leaves KEEP_BITS bits of T_n x."""
    pb = seq.power_bases()
    if pb is None or not n:
        return 62
    need = pb.log2_sum(1, n) + KEEP_BITS
    return 62 if need <= 62 else int(math.ceil(need)) + 44


def _estimate(frac: float, M: int, method: str, components: int) -> MeasureEstimate:
    if method == "grid":
        hw = min(1.0, components / M)
    else:
        hw = Z95 * proportion_se(frac, M)
    return MeasureEstimate.from_raw(frac, hw, "grid" if method == "grid" else "monte-carlo", M)


def estimate_An_measure(seq: MapSequence, n: int, r, resolution: int = 10 ** 5,
                        method: str = "grid", seed: int = 0,
                        precision: int | None = None) -> MeasureEstimate:
    if _is_full(r):
        return MeasureEstimate.exact(1.0)
    pts = make_points(method, resolution, seed, point_bits(seq, n))
    eng = make_engine(seq, pts, n, precision)
    frac = float(eng.recurrent(n, r).mean())
    return _estimate(frac, resolution, method, component_count(seq, n))


def estimate_An_measures(seq: MapSequence, ns, radii, resolution: int = 10 ** 5,
                         method: str = "grid", seed: int = 0,
                         precision: int | None = None) -> list[MeasureEstimate]:
    """lambda(A_n) for several n (increasing) in one orbit pass."""
    ns = list(ns)
    radii = list(radii)
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("ns must be strictly increasing")
    pts = make_points(method, resolution, seed, point_bits(seq, max(ns)))
    eng = make_engine(seq, pts, max(ns), precision)
    out = []
    for n, r in zip(ns, radii):
        if _is_full(r):
            out.append(MeasureEstimate.exact(1.0))
            continue
        frac = float(eng.recurrent(n, r).mean())
        out.append(_estimate(frac, resolution, method, component_count(seq, n)))
    return out


def estimate_intersection(seq: MapSequence, m: int, n: int, r_m, r_n, resolution: int = 10 ** 5,
                          method: str = "grid", seed: int = 0,
                          precision: int | None = None) -> MeasureEstimate:
    """lambda(A_m intersect A_n) for m <= n."""
    if m > n:
        raise ValueError("need m <= n")
    pts = make_points(method, resolution, seed, point_bits(seq, n))
    eng = make_engine(seq, pts, n, precision)
    full_m, full_n = _is_full(r_m), _is_full(r_n)
    in_m = np.ones(len(pts), bool) if full_m else eng.recurrent(m, r_m)
    in_n = in_m if (m == n and not full_n and not full_m and float(r_m) == float(r_n)) else (
        np.ones(len(pts), bool) if full_n else eng.recurrent(n, r_n))
    frac = float((in_m & in_n).mean())
    comps = (0 if full_m else component_count(seq, m)) + (0 if full_n else component_count(seq, n))
    if full_m and full_n:
        return MeasureEstimate.exact(1.0)
    return _estimate(frac, resolution, method, comps)


# ---------------------------------------------------------------------------
# Bounds and sandwich


def an_envelope(r: float, n: int, tau: float, eps: float = 0.5) -> tuple[float, float]:
    """Lower and upper bounds on lambda(A_n) for radius r at time n."""
    e = math.exp(-n * tau)
    r = float(r)
    return r * (1 - eps) / math.pi - (1 / eps - 1) * e, r * (1 + eps) / math.pi + 2 * (1 / eps + 1) * e


def sandwich_counts(seq: MapSequence, x0, r: float, r_n: float, n: int, points,
                    precision: int | None = None) -> dict:
    """Pointwise check of T_n^{-1}B(x0, r_n - r) cap E <= A_n cap E <= T_n^{-1}B(x0, r_n + r) cap E.

    ``points`` must lie in B(x0, r) with r < r_n.
    """
    if not r < r_n:
        raise ValueError("need r < r_n")
    ball = Arc(x0, r)
    inner_r = r_n - r
    outer_r = min(math.pi, r_n + r)
    counts = {"inner": 0, "an": 0, "outer": 0, "violations": 0, "points": 0}
    for x in points:
        if not arc_contains(ball, x):
            raise ValueError("sample point outside B(x0, r)")
        tx = None
        for tx in orbit(seq, x, n, precision):
            pass
        a = arc_contains(Arc(x, r_n), tx)
        i = arc_contains(Arc(x0, inner_r), tx)
        o = arc_contains(Arc(x0, outer_r), tx)
        counts["points"] += 1
        counts["inner"] += i
        counts["an"] += a
        counts["outer"] += o
        counts["violations"] += (i and not a) or (a and not o)
    return counts


# ---------------------------------------------------------------------------
# Ensembles


@dataclass
class RecurrenceSurvey:
    events: list
    failures: list
    summary: dict = field(default_factory=dict)


class _RecurPlan:
    def __init__(self, radii: RadiusGenerator, N: int, S: int):
        n = np.arange(1, N + 1, dtype=np.int64)
        self.hf, self.hc = radii.scaled_half_bounds(n, S)
        self.S = S

    def events(self, W, u):
        A = np.mod(W[1:] - W[0] - u[0] + self.hf, self.S)
        c = u[0] + u[1:] + (self.hc - self.hf)
        return batch.classify(A, c, 2 * self.hf - 1, 2 * self.hc, self.S)


def recurrence_survey(seq: MapSequence, radii: RadiusGenerator, samples: int, N: int, seed: int,
                      tail=None, precision: int | None = None, threads: int = 1,
                      points=None) -> RecurrenceSurvey:
    """Record every n <= N with d(T_n x, x) < r_n for each sample."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    P = precision or precision_budget(seq, N)
    bases = seq.power_bases()
    events, failures = [], []

    def exact_events(x):
        out = []
        if isinstance(x, DigitStream):
            x = x.angle()
        ties = "raise" if hasattr(x, "stream") else "open"
        for n, p in enumerate(orbit(seq, x, N, precision), start=1):
            if arc_contains(Arc(x, radii(n)), p, ties=ties):
                out.append(n)
        return out

    if points is not None:
        for sid, x in enumerate(points):
            try:
                events.append((sid, exact_events(x)))
            except (PrecisionExhausted, ModulusDrift, BoundaryTie) as e:
                failures.append(SampleFailure(sid, getattr(e, "step", None), str(e)))
    elif bases is not None:
        limit = stream_limit(bases, P)
        fail_at = failure_step(bases, limit, N)
        cb = bases.constant_base
        plan = _RecurPlan(radii, N, cb ** batch.window_digits(cb)) if cb is not None else None

        def work(sid):
            try:
                if fail_at is not None:
                    raise PrecisionExhausted("precision budget exhausted", step=fail_at)
                stream = DigitStream.random(bases, seed, sid, limit=limit)
                if plan is None:
                    return sid, exact_events(stream)
                W, u, _ = batch.digit_windows(stream, N)
                inside, amb = plan.events(W, u)
                x = stream.angle(0)
                for i in np.flatnonzero(amb):
                    n = int(i) + 1
                    inside[i] = arc_contains(Arc(x, radii(n)), stream.angle(n), ties="raise")
                return sid, (np.flatnonzero(inside) + 1).tolist()
            except (PrecisionExhausted, BoundaryTie) as e:
                return SampleFailure(sid, getattr(e, "step", None), str(e))

        if threads > 1:
            with ThreadPoolExecutor(threads) as ex:
                results = list(ex.map(work, range(samples)))
        else:
            results = [work(s) for s in range(samples)]
        for r in results:
            (failures if isinstance(r, SampleFailure) else events).append(r)
    else:
        starts = [dyadic_start(seed, s, P) for s in range(samples)]
        try:
            cbatch = batch.ComplexBatch(seq, starts, P)
            start_f = np.array([float(s) for s in starts])
            hits = [[] for _ in starts]
            for n in range(1, N + 1):
                cbatch.step()
                r = radii(n)
                theta = cbatch.turns()
                inside, amb = batch.float_member(theta, start_f, float(r) / (2 * math.pi),
                                                 cbatch.float_guard() + 2.0 ** -50)
                for i in np.flatnonzero(amb):
                    inside[i] = arc_contains(Arc(starts[i], r), cbatch.angle(int(i)))
                for i in np.flatnonzero(inside):
                    hits[i].append(n)
            events = list(enumerate(hits))
        except (PrecisionExhausted, ModulusDrift) as e:
            failures = [SampleFailure(s, getattr(e, "step", None), str(e)) for s in range(samples)]
    surv = RecurrenceSurvey(events, failures)
    surv.summary = survey_summary(surv, radii, N, tail, P)
    return surv


def survey_summary(surv: RecurrenceSurvey, radii: RadiusGenerator, N: int, tail=None,
                   precision_bits=None) -> dict:
    lo, hi = tail if tail is not None else (N // 2, N)
    expected = math.fsum(radii.measures(np.arange(1, N + 1))) if N else 0.0
    out = {"N": N, "tail_window": [lo, hi], "expected_count": expected,
           "samples_ok": len(surv.events), "samples_failed": len(surv.failures),
           "summable": radii.summable(), "precision_bits": precision_bits}
    if surv.failures:
        out["failures"] = [{"sample_id": f.sample_id, "step": f.step, "message": f.message}
                           for f in surv.failures]
    if not surv.events:
        return out
    counts = [len(ev) for _, ev in surv.events]
    mean, se = mean_se(counts)
    tails = [any(lo < n <= hi for n in ev) for _, ev in surv.events]
    tf = float(np.mean(tails))
    out.update({"mean_count": mean, "mean_count_se": se, "tail_fraction": tf,
                "tail_fraction_se": proportion_se(tf, len(tails))})
    return out


def summability_gap(seq: MapSequence, radii: RadiusGenerator, ns, resolution: int = 10 ** 5,
                    method: str = "grid") -> dict:
    """Partial sums of estimated lambda(A_n) against (1/pi) sum r_n at the given n."""
    ns = list(ns)
    ests = estimate_An_measures(seq, ns, [radii(n) for n in ns], resolution, method)
    a = np.cumsum([e.value for e in ests])
    b = np.cumsum(radii.measures(np.array(ns)))
    gap = a - b
    return {"n": ns, "sum_lambda_An": a.tolist(), "sum_r_over_pi": b.tolist(),
            "gap": gap.tolist(), "max_abs_gap": float(np.abs(gap).max())}


def measint_regression(seq: MapSequence, pairs, radii: RadiusGenerator, resolution: int = 10 ** 5,
                       train_frac: float = 0.5) -> dict:
    """Fit lambda(A_m cap A_n) <= c1 (r_m/pi)(r_n/pi) + c2 (r_n/pi) e^{-(n-m) tau}.

    Non-negative least squares on the first ``train_frac`` of pairs (ordered by
    gap n - m); the bound with the fitted constants is checked on the rest.
    """
    pairs = sorted(pairs, key=lambda p: (p[1] - p[0], p))
    tau = seq.tau
    y, feats, hws = [], [], []
    for m, n in pairs:
        est = estimate_intersection(seq, m, n, radii(m), radii(n), resolution)
        pm, pn = float(radii(m)) / math.pi, float(radii(n)) / math.pi
        y.append(est.raw)
        hws.append(est.raw_half_width)
        feats.append([pm * pn, pn * math.exp(-(n - m) * tau)])
    y, F, hws = np.array(y), np.array(feats), np.array(hws)
    k = max(2, int(len(pairs) * train_frac))
    coef, _ = nnls(F[:k], y[:k])
    # scale up so that the training points sit under the bound
    pred = F @ coef
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(pred[:k] > 0, (y[:k] - hws[:k]) / pred[:k], 0.0)
    scale = max(1.0, float(np.max(ratio))) if k else 1.0
    coef = coef * scale
    bound = F @ coef
    ok = y[k:] <= bound[k:] + hws[k:]
    resid = y - F @ (coef / scale)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return {"pairs": [list(p) for p in pairs], "estimates": y.tolist(), "coefficients": coef.tolist(),
            "r2": r2, "validated": bool(ok.all()), "train_size": k}
