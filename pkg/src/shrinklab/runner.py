"""Experiment dispatch: config in, auditable run record out."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

from . import __version__, batch, markov, mixing, recurrence
from .cantor import (BaseSequence, DigitStream, ball_events, count_patterns, expected_pattern_count,
                     phi_cantor_checkpoints)
from .circle import Arc, arc_contains
from .config import ExperimentConfig
from .maps import MapSequence, precision_budget
from .schedules import RadiusGenerator, parse_angle
from .shrink import Ensemble, TargetSchedule, monte_carlo_shrinking, summarize
from .stats import proportion_se


@dataclass
class Table:
    name: str
    header: list
    rows: list


@dataclass
class RunRecord:
    config: dict
    code_version: str
    summary: dict
    verdicts: dict
    tables: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.verdicts) and all(v["pass"] for v in self.verdicts.values())

    def table(self, name: str) -> Table:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)


def verdict(ok, **detail) -> dict:
    return {"pass": bool(ok), **detail}


def tail_measure(radii: RadiusGenerator, M: int, N: int | None = None) -> float:
    """sum_{n > M} r_n / pi (to infinity when the family allows, else up to N)."""
    if radii.kind == "power-law" and float(radii.exponent) > 1:
        return float(float(radii.scale) * mpmath.zeta(float(radii.exponent), M + 1))
    if radii.kind == "geometric" and float(radii.ratio) < 1:
        q = float(radii.ratio)
        return float(radii.scale) * q ** (M + 1) / (1 - q)
    if N is None:
        return math.inf
    return math.fsum(radii.measures(np.arange(M + 1, N + 1)))


# ---------------------------------------------------------------------------
# shrink


SHRINK_HEADER = ["sample_id", "N", "count", "phi", "deviation"]


def _shrink_rows(stats) -> list:
    return [[r["sample_id"], r["N"], r["count"], r["phi"], r["deviation"]]
            for s in stats for r in s.rows()]


def run_shrink(cfg: ExperimentConfig) -> RunRecord:
    sc = cfg.shrink
    seq = cfg.map_sequence()
    sched = TargetSchedule(sc.centers(), sc.radii.build())
    ens = monte_carlo_shrinking(seq, sched, cfg.samples, sc.checkpoints, cfg.seed, sc.eps,
                                precision=cfg.precision_bits, threads=cfg.threads)
    s = ens.summary
    verdicts = {"no_failures": verdict(not ens.failures, failed=len(ens.failures))}
    if ens.stats:
        verdicts.update(shrink_verdicts(ens, sc, sched.radii))
    return RunRecord(cfg.to_dict(), __version__, s, verdicts,
                     [Table("shrink", SHRINK_HEADER, _shrink_rows(ens.stats))])


def shrink_verdicts(ens: Ensemble, sc, radii: RadiusGenerator) -> dict:
    s = ens.summary
    cps = s["checkpoints"]
    out = {}
    if radii.summable():
        phi_N = s["phi"][-1]
        out["mean_total"] = verdict(abs(s["mean_count_last"] - phi_N) <= sc.mean_tolerance,
                                    mean=s["mean_count_last"], phi=phi_N, tolerance=sc.mean_tolerance)
        if len(cps) >= 2:
            frac = s["fraction_increasing_last"]
            se = proportion_se(frac, s["samples_ok"])
            bound = 2 * tail_measure(radii, cps[-2], cps[-1]) + sc.tail_se * se
            out["tail_hits"] = verdict(frac <= bound, fraction=frac, bound=bound, se=se,
                                       window=[cps[-2], cps[-1]])
    else:
        r = s.get("ratio_last", math.nan)
        out["ratio"] = verdict(abs(r - 1) <= sc.ratio_tolerance, ratio=r,
                               se=s.get("ratio_last_se"), interval=[1 - sc.ratio_tolerance, 1 + sc.ratio_tolerance])
        if len(cps) >= 2:
            out["slope"] = verdict(s["loglog_slope"] <= sc.slope_max, slope=s["loglog_slope"],
                                   max=sc.slope_max)
    return out


# ---------------------------------------------------------------------------
# recur


def run_recur(cfg: ExperimentConfig) -> RunRecord:
    rc = cfg.recur
    seq = cfg.map_sequence()
    radii = rc.radii.build()
    tail = tuple(rc.tail) if rc.tail else (rc.N // 2, rc.N)
    surv = recurrence.recurrence_survey(seq, radii, cfg.samples, rc.N, cfg.seed, tail=tail,
                                        precision=cfg.precision_bits, threads=cfg.threads)
    s = surv.summary
    verdicts = {"no_failures": verdict(not surv.failures, failed=len(surv.failures))}
    if surv.events:
        lo = s["expected_count"] - rc.count_se * s["mean_count_se"]
        hi = s["expected_count"] + rc.count_se * s["mean_count_se"]
        verdicts["mean_count"] = verdict(lo <= s["mean_count"] <= hi, mean=s["mean_count"],
                                         expected=s["expected_count"], interval=[lo, hi])
        tf = s["tail_fraction"]
        if radii.summable():
            verdicts["tail_fraction"] = verdict(tf <= rc.tail_fraction_max, fraction=tf,
                                                max=rc.tail_fraction_max, side="zero-law")
        else:
            verdicts["tail_fraction"] = verdict(tf >= rc.tail_fraction_min, fraction=tf,
                                                min=rc.tail_fraction_min, side="divergent")
    tables = [Table("events", ["sample_id", "n"], [[sid, n] for sid, ev in surv.events for n in ev])]
    extra = {}
    if rc.measure_cases:
        res = measure_cases(seq, rc.measure_cases, cfg.seed, rc.measure_max_n, rc.measure_resolution,
                            rc.measure_method)
        rate = float(np.mean([r[-1] for r in res])) if res else 0.0
        verdicts["measure_oracle"] = verdict(rate >= rc.measure_pass_rate, pass_rate=rate,
                                             cases=len(res), required=rc.measure_pass_rate)
        tables.append(Table("measures", ["n", "r", "estimate", "half_width", "exact", "agree"], res))
    if rc.envelope_max_n:
        env = envelope_rows(seq, rc.envelope_max_n, rc.envelope_resolution, radii)
        verdicts["an_envelope"] = verdict(all(r[-1] for r in env), levels=len(env))
        tables.append(Table("envelope", ["n", "r", "estimate", "half_width", "lower", "upper", "inside"], env))
    return RunRecord(cfg.to_dict(), __version__, s, verdicts, tables, extra)


def measure_cases(seq: MapSequence, cases: int, seed: int, max_n: int, resolution: int,
                  method: str) -> list:
    """Random (n, r) pairs checked against the exact power-map oracle."""
    bases = seq.power_bases()
    if bases is None:
        raise ValueError("measure oracle cases need power maps")
    rng = np.random.default_rng([seed, 4])
    out = []
    for c in range(cases):
        n = int(rng.integers(1, max_n + 1))
        r = float(rng.uniform(0.01, 1.0) * math.pi)
        est = recurrence.estimate_An_measure(seq, n, r, resolution, method, seed=seed * 1000 + c)
        exact = recurrence.exact_An_measure_power(bases.product(n), r)
        ok = est.contains(exact)
        out.append([n, r, est.value, est.half_width, exact, bool(ok)])
    return out


def envelope_rows(seq: MapSequence, max_n: int, resolution: int, radii: RadiusGenerator,
                  eps: float = 0.5) -> list:
    ns = list(range(1, max_n + 1))
    rs = [radii(n) for n in ns]
    ests = recurrence.estimate_An_measures(seq, ns, rs, resolution, "grid")
    out = []
    for n, r, e in zip(ns, rs, ests):
        lo, hi = recurrence.an_envelope(float(r), n, seq.tau, eps)
        ok = lo - e.half_width <= e.value <= hi + e.half_width
        out.append([n, float(r), e.value, e.half_width, lo, hi, bool(ok)])
    return out


# ---------------------------------------------------------------------------
# cantor


def cantor_ensemble(bases: BaseSequence, pattern, samples: int, checkpoints, seed: int,
                    eps: float = 0.1, ball_checks: int = 0):
    """Pattern counts for random digit streams, plus pointwise ball-inclusion checks."""
    stats, balls = [], {"checked": 0, "match": 0, "inner": 0, "outer": 0, "x0_ball": 0,
                        "inner_not_match": 0, "match_not_outer": 0, "match_not_x0_ball": 0}
    for sid in range(samples):
        x = DigitStream.random(bases, seed, sid)
        stats.append(count_patterns(x, pattern, checkpoints, eps, sample_id=sid))
        for n in range(1, min(ball_checks, checkpoints[-1]) + 1):
            ev = ball_events(x, n, pattern)
            balls["checked"] += 1
            for k in ("match", "inner", "outer", "x0_ball"):
                balls[k] += int(bool(ev.get(k, False)))
            balls["inner_not_match"] += int(ev["inner"] and not ev["match"])
            balls["match_not_outer"] += int(ev["match"] and not ev["outer"])
            if "x0_ball" in ev:
                balls["match_not_x0_ball"] += int(ev["match"] and not ev["x0_ball"])
    for s in stats:
        s.seed = seed
    return Ensemble(stats, []), balls


def run_cantor(cfg: ExperimentConfig) -> RunRecord:
    cc = cfg.cantor
    bases = cc.base_sequence()
    pattern = cc.pattern()
    cps = cc.checkpoints
    ens, balls = cantor_ensemble(bases, pattern, cfg.samples, cps, cfg.seed, cc.eps, cc.ball_checks)
    phis = phi_cantor_checkpoints(bases, pattern.xi, cps)
    ens.summary = summarize(ens, cps, phis)
    s = ens.summary
    s["expected_count_last"] = expected_pattern_count(bases, pattern, cps[-1])
    s["expected_over_phi"] = s["expected_count_last"] / phis[-1]
    s["ball_checks"] = balls
    r = s["ratio_last"]
    verdicts = {
        "ratio": verdict(abs(r - 1) <= cc.ratio_tolerance, ratio=r, se=s["ratio_last_se"],
                         interval=[1 - cc.ratio_tolerance, 1 + cc.ratio_tolerance]),
        "ball_inclusions": verdict(balls["inner_not_match"] == 0 and balls["match_not_outer"] == 0,
                                   checked=balls["checked"]),
    }
    return RunRecord(cfg.to_dict(), __version__, s, verdicts,
                     [Table("cantor", SHRINK_HEADER, _shrink_rows(ens.stats))])


# ---------------------------------------------------------------------------
# markov


MARKOV_HEADER = ["level", "itinerary", "start", "length", "K", "sup_deriv"]


def run_markov(cfg: ExperimentConfig) -> RunRecord:
    mc = cfg.markov
    m = mc.map.build()
    report, cyl = markov.distortion_certificate(m, mc.max_level, cfg.seed, mc.conformal_samples)
    cyl = sorted(cyl, key=lambda c: (c.level, c.start))
    rows = [[c.level, "".join(str(i) for i in c.itinerary), c.start, c.length, c.K, c.sup_deriv]
            for c in cyl]
    verdicts = {"certificate": verdict(report["verdict"] == "PASS", C_fit=report["fit"]["C_fit"],
                                       sum_inv_K_ratio=report["sum_inv_K_ratio"])}
    summary = {k: v for k, v in report.items() if k != "levels"}
    return RunRecord(cfg.to_dict(), __version__, summary, verdicts,
                     [Table("cylinders", MARKOV_HEADER, rows)], {"certificate": report})


# ---------------------------------------------------------------------------
# mixing


def run_mixing(cfg: ExperimentConfig) -> RunRecord:
    xc = cfg.mixing
    seq = cfg.map_sequence()
    family = mixing.dyadic_arcs(xc.dyadic_level) + mixing.golden_arcs()
    rep = mixing.mixing_scan(seq, range(0, xc.n_max + 1), family, xc.resolution, xc.method, cfg.seed,
                             precision=cfg.precision_bits)
    mixing.analyse(rep, xc.split)
    verdicts = {"exponential_bound": verdict(rep.bound["pass"], K_fit=rep.bound["K_fit"],
                                             tau=rep.bound["tau"], split=rep.bound["split"],
                                             violations=len(rep.bound["violations"]))}
    pb = seq.power_bases()
    if pb is not None and all(pb.base(i) == 2 for i in range(1, xc.n_max + 1)):
        dy = mixing.dyadic_arcs(xc.dyadic_level)
        worst = Fraction(0)
        for n in range(xc.dyadic_level, xc.n_max + 1):
            for A in dy:
                for E in dy:
                    worst = max(worst, mixing.dyadic_exact_mixing(seq, A, E, n))
        verdicts["dyadic_oracle"] = verdict(worst == 0, max_deviation=str(worst),
                                            pairs=len(dy) ** 2)
    rows = [[p.n, p.pair_id, p.deviation] for p in rep.pairs]
    summary = {"tau_theory": rep.tau_theory, "sup_rows": [list(r) for r in rep.rows], "fit": rep.fit,
               "bound": rep.bound, "family": [f.to_config() for f in family],
               "resolution": xc.resolution, "method": xc.method}
    return RunRecord(cfg.to_dict(), __version__, summary, verdicts,
                     [Table("mixing", ["n", "pair_id", "deviation"], rows)])


# ---------------------------------------------------------------------------
# converge-demo


def hit_indicators(seq: MapSequence, starts, horizons, center, radius: float,
                   precision: int | None = None) -> dict:
    """h_n(x) = [T_n(x) in B(center, radius)] for each n in ``horizons``."""
    N = max(horizons)
    P = precision or precision_budget(seq, N)
    cb = batch.ComplexBatch(seq, starts, P)
    arc = Arc(center, radius)
    c = float(center) % 1.0
    h = radius / (2 * math.pi)
    out = {}
    for n in range(1, N + 1):
        cb.step()
        if n in horizons:
            inside, amb = batch.float_member(cb.turns(), c, h, cb.float_guard() + 2.0 ** -50)
            for i in np.flatnonzero(amb):
                inside[i] = arc_contains(arc, cb.angle(int(i)))
            out[n] = inside
    return out


def run_converge(cfg: ExperimentConfig) -> RunRecord:
    cc = cfg.converge
    n_max = cc.horizon
    horizons = (n_max // 2, n_max)
    pts = batch.PointSet.grid(cc.grid)
    starts = pts.fractions()
    center = parse_angle(cc.center)
    lam = cc.radius / math.pi
    conv = MapSequence.converging(n_max)
    contrast = MapSequence.constant(cc.contrast.build())
    res = {}
    for name, seq in (("converging", conv), ("contrast", contrast)):
        hits = hit_indicators(seq, starts, horizons, center, cc.radius, cfg.precision_bits)
        res[name] = hits
    stats = {}
    for name, hits in res.items():
        a, b = hits[horizons[0]], hits[horizons[1]]
        stats[name] = {"hit_fraction": float(b.mean()), "hit_fraction_mid": float(a.mean()),
                       "stabilization": float((a == b).mean())}
    indep = lam ** 2 + (1 - lam) ** 2
    summary = {"lambda": lam, "independence_prediction": indep, "horizons": list(horizons),
               "grid": cc.grid, "families": stats,
               "precision_bits": cfg.precision_bits or precision_budget(conv, n_max)}
    verdicts = {
        "hit_fraction": verdict(abs(stats["converging"]["hit_fraction"] - lam) <= cc.hit_tolerance,
                                value=stats["converging"]["hit_fraction"], target=lam),
        "stabilization": verdict(stats["converging"]["stabilization"] >= cc.stabilization_min,
                                 value=stats["converging"]["stabilization"], min=cc.stabilization_min),
        "contrast": verdict(abs(stats["contrast"]["stabilization"] - indep) <= cc.contrast_tolerance,
                            value=stats["contrast"]["stabilization"], target=indep),
    }
    rows = []
    for name, hits in res.items():
        a, b = hits[horizons[0]], hits[horizons[1]]
        for i, x in enumerate(pts.floats()):
            rows.append([name, i, float(x), int(a[i]), int(b[i])])
    return RunRecord(cfg.to_dict(), __version__, summary, verdicts,
                     [Table("converge", ["family", "point_id", "x", "hit_mid", "hit_end"], rows)])


RUNNERS = {
    "shrink": run_shrink,
    "recur": run_recur,
    "cantor": run_cantor,
    "markov": run_markov,
    "mixing": run_mixing,
    "converge-demo": run_converge,
}


def run(cfg: ExperimentConfig) -> RunRecord:
    t0 = time.perf_counter()
    rec = RUNNERS[cfg.kind](cfg)
    rec.timings["total_seconds"] = time.perf_counter() - t0
    return rec
