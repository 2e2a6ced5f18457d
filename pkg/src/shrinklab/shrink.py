"""Shrinking targets: hit counting against Phi(N) = sum_{n<=N} r_n/pi."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import batch, rng
from .cantor import DigitAngle, DigitStream
from .circle import Arc, BoundaryTie, PrecisionExhausted, MIN_QUERY_BITS, arc_contains
from .maps import MapSequence, ModulusDrift, orbit, precision_budget
from .schedules import CenterGenerator, RadiusGenerator
from .stats import (DEFAULT_EPS, HitStatistics, check_checkpoints, counts_at,
                    loglog_slope, mean_se)

OUTSIDE_HYPOTHESES = "outside theorem hypotheses (radii not non-increasing)"


@dataclass(frozen=True)
class TargetSchedule:
    centers: CenterGenerator
    radii: RadiusGenerator

    @property
    def monotone_flag(self) -> bool:
        return self.radii.is_monotone

    def target(self, n: int) -> Arc:
        return Arc(self.centers(n), self.radii(n))

    def metadata(self) -> dict:
        out = {"monotone": self.monotone_flag}
        if not self.monotone_flag:
            out["note"] = OUTSIDE_HYPOTHESES
        return out

    def to_config(self) -> dict:
        return {"centers": self.centers.to_config(), "radii": self.radii.to_config()}


def phi(schedule: TargetSchedule, N: int) -> float:
    if N < 0:
        raise ValueError("N must be non-negative")
    if N == 0:
        return 0.0
    return math.fsum(schedule.radii.phi_terms(N))


def phi_checkpoints(schedule: TargetSchedule, checkpoints) -> list[float]:
    cps = list(checkpoints)
    if not cps:
        return []
    terms = schedule.radii.phi_terms(max(cps))
    out, acc, prev = [], [], 0
    for c in cps:
        acc.append(math.fsum(terms[prev:c]))
        out.append(math.fsum(acc))
        prev = c
    return out


def _ties_mode(p) -> str:
    return "raise" if isinstance(p, DigitAngle) else "open"


def hit_mask(seq: MapSequence, x, schedule: TargetSchedule, N: int,
             precision: int | None = None) -> np.ndarray:
    """Entry n-1 is True iff T_n(x) lies in B(x_n, r_n)."""
    if isinstance(x, DigitStream):
        x = x.angle()
    out = np.zeros(N, dtype=bool)
    if N == 0:
        return out
    for n, p in enumerate(orbit(seq, x, N, precision), start=1):
        out[n - 1] = arc_contains(schedule.target(n), p, ties=_ties_mode(p))
    return out


def count_hits(seq: MapSequence, x, schedule: TargetSchedule, checkpoints,
               eps: float = DEFAULT_EPS, precision: int | None = None) -> HitStatistics:
    cps = check_checkpoints(checkpoints)
    N = cps[-1] if cps else 0
    mask = hit_mask(seq, x, schedule, N, precision)
    meta = schedule.metadata()
    return HitStatistics.build(cps, counts_at(mask, cps), phi_checkpoints(schedule, cps), eps,
                               metadata=meta)


# ---------------------------------------------------------------------------
# Ensembles


@dataclass
class SampleFailure:
    sample_id: int
    step: int | None
    message: str


@dataclass
class Ensemble:
    stats: list
    failures: list
    summary: dict = field(default_factory=dict)


def stream_limit(bases, bits: int) -> int:
    """Number of digits whose bases multiply to at most 2**bits."""
    cb = bases.constant_base
    if cb is not None:
        return int(bits // math.log2(cb))
    k, acc = 0, 0.0
    while True:
        nxt = acc + math.log2(bases.base(k + 1))
        if nxt > bits:
            return k
        acc, k = nxt, k + 1


def failure_step(bases, limit: int, N: int) -> int | None:
    """First step whose shifted stream keeps fewer than MIN_QUERY_BITS bits."""
    cb = bases.constant_base
    if cb is not None:
        lb = math.log2(cb)
        n = limit - math.ceil(MIN_QUERY_BITS / lb) + 1
        while n > 0 and (limit - (n - 1)) * lb < MIN_QUERY_BITS:
            n -= 1
        while (limit - n) * lb >= MIN_QUERY_BITS:
            n += 1
        return n if n <= N else None
    for n in range(1, N + 1):
        if bases.log2_sum(n + 1, limit - n) < MIN_QUERY_BITS:
            return n
    return None


class WindowPlan:
    """Per-step integer thresholds for window tests against a target schedule."""

    def __init__(self, schedule: TargetSchedule, N: int, S: int):
        n = np.arange(1, N + 1, dtype=np.int64)
        cl, ch = schedule.centers.scaled_bounds(n, S)
        hf, hc = schedule.radii.scaled_half_bounds(n, S)
        self.S = S
        self.lc = ch - hf
        self.slack = (ch - cl) + (hc - hf)
        self.hin = 2 * hf - 1
        self.hout = 2 * hc

    def hits(self, W, u):
        """(inside, ambiguous) for steps 1..N from windows W[1..N]."""
        A = np.mod(W[1:] - self.lc, self.S)
        return batch.classify(A, u[1:] + self.slack, self.hin, self.hout, self.S)


def _window_sample(seq, schedule, plan, stream, N):
    W, u, _ = batch.digit_windows(stream, N)
    inside, amb = plan.hits(W, u)
    for i in np.flatnonzero(amb):
        n = int(i) + 1
        inside[i] = arc_contains(schedule.target(n), stream.angle(n), ties="raise")
    return inside, int(amb.sum())


def monte_carlo_shrinking(seq: MapSequence, schedule: TargetSchedule, samples: int,
                          checkpoints, seed: int, eps: float = DEFAULT_EPS,
                          precision: int | None = None, threads: int = 1,
                          points=None) -> Ensemble:
    """Count hits for ``samples`` Lebesgue-uniform starting points.

    Power-map sequences sample random digit streams (exact uniform points);
    other sequences sample uniform dyadic rationals at the working precision.
    ``points`` replaces the random sample by explicit starting angles.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    cps = check_checkpoints(checkpoints)
    N = cps[-1] if cps else 0
    P = precision or precision_budget(seq, N)
    phis = phi_checkpoints(schedule, cps)
    meta = schedule.metadata()
    stats, failures = [], []
    bases = seq.power_bases()

    def finish(sid, mask, extra=None):
        md = dict(meta)
        if extra:
            md.update(extra)
        return HitStatistics.build(cps, counts_at(mask, cps), phis, eps, seed=seed,
                                   sample_id=sid, metadata=md)

    if points is not None:
        for sid, x in enumerate(points):
            try:
                stats.append(finish(sid, hit_mask(seq, x, schedule, N, precision)))
            except (PrecisionExhausted, ModulusDrift, BoundaryTie) as e:
                failures.append(SampleFailure(sid, getattr(e, "step", None), str(e)))
    elif bases is not None:
        limit = stream_limit(bases, P)
        fail_at = failure_step(bases, limit, N)
        cb = bases.constant_base
        plan = WindowPlan(schedule, N, cb ** batch.window_digits(cb)) if cb is not None else None

        def work(sid):
            if fail_at is not None:
                raise PrecisionExhausted(
                    f"precision budget {P} bits leaves < {MIN_QUERY_BITS} bits", step=fail_at)
            stream = DigitStream.random(bases, seed, sid, limit=limit)
            if plan:
                mask, amb = _window_sample(seq, schedule, plan, stream, N)
                return finish(sid, mask, {"window_fallbacks": amb})
            return finish(sid, hit_mask(seq, stream, schedule, N, P))

        def guarded(sid):
            try:
                return work(sid)
            except (PrecisionExhausted, BoundaryTie) as e:
                return SampleFailure(sid, getattr(e, "step", None), str(e))

        if threads > 1:
            with ThreadPoolExecutor(threads) as ex:
                results = list(ex.map(guarded, range(samples)))
        else:
            results = [guarded(s) for s in range(samples)]
        for r in results:
            (failures if isinstance(r, SampleFailure) else stats).append(r)
    else:
        starts = [dyadic_start(seed, s, P) for s in range(samples)]
        try:
            masks = complex_hit_masks(seq, schedule, starts, N, P)
            for sid, m in enumerate(masks):
                stats.append(finish(sid, m))
        except (PrecisionExhausted, ModulusDrift) as e:
            for sid in range(samples):
                failures.append(SampleFailure(sid, getattr(e, "step", None), str(e)))
    ens = Ensemble(stats, failures)
    ens.summary = summarize(ens, cps, phis, schedule, precision_bits=P)
    return ens


def dyadic_start(seed: int, sample_id: int, bits: int) -> Fraction:
    """Uniform point: centre of a random dyadic cell of width 2**-bits."""
    m = rng.uniform_dyadic(seed, sample_id, bits)
    return Fraction(2 * m + 1, 1 << (bits + 1))


def complex_hit_masks(seq, schedule, starts, N, P):
    cb = batch.ComplexBatch(seq, starts, P)
    masks = np.zeros((len(starts), N), dtype=bool)
    for n in range(1, N + 1):
        cb.step()
        arc = schedule.target(n)
        theta = cb.turns()
        c = float(_center_float(arc.center))
        h = float(arc.radius) / (2 * math.pi)
        inside, amb = batch.float_member(theta, c, h, cb.float_guard() + 2.0 ** -50)
        for i in np.flatnonzero(amb):
            inside[i] = arc_contains(arc, cb.angle(int(i)))
        masks[:, n - 1] = inside
    return masks


def _center_float(c) -> float:
    return float(c) % 1.0


def summarize(ens: Ensemble, cps, phis, schedule=None, precision_bits=None) -> dict:
    out = {"samples_ok": len(ens.stats), "samples_failed": len(ens.failures),
           "checkpoints": list(cps), "phi": list(phis), "precision_bits": precision_bits}
    if schedule is not None:
        out.update(schedule.metadata())
    if ens.failures:
        out["failures"] = [{"sample_id": f.sample_id, "step": f.step, "message": f.message}
                           for f in ens.failures]
    if not ens.stats or not cps:
        return out
    counts = np.array([s.counts for s in ens.stats], dtype=float)
    phi_arr = np.array(phis)
    mean_counts = counts.mean(axis=0)
    abs_err = np.abs(counts - phi_arr).mean(axis=0)
    out["mean_count"] = mean_counts.tolist()
    out["mean_abs_error"] = abs_err.tolist()
    last_mean, last_se = mean_se(counts[:, -1])
    out["mean_count_last"] = last_mean
    out["mean_count_last_se"] = last_se
    if phi_arr[-1] > 0:
        out["ratio_last"] = last_mean / phi_arr[-1]
        out["ratio_last_se"] = last_se / phi_arr[-1]
    devs = np.array([s.deviations[-1] for s in ens.stats])
    out["deviation_quantiles"] = {str(q): float(np.quantile(devs, q)) for q in (0.05, 0.5, 0.95)}
    out["loglog_slope"] = loglog_slope(phi_arr, abs_err) if len(cps) >= 2 else math.nan
    if len(cps) >= 2:
        inc = counts[:, -1] > counts[:, -2]
        out["fraction_increasing_last"] = float(inc.mean())
    return out
