"""Shared counting record and small statistical reductions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_EPS = 0.1


def deviation_statistic(count: float, phiN: float, eps: float = DEFAULT_EPS) -> float:
    """(count - phi) / (max(phi, e)^(1/2) * ln(max(phi, e))^(3/2 + eps))."""
    if phiN < 0:
        raise ValueError("phiN must be non-negative")
    if eps <= 0:
        raise ValueError("eps must be positive")
    g = max(phiN, math.e)
    return (count - phiN) / (math.sqrt(g) * math.log(g) ** (1.5 + eps))


@dataclass
class HitStatistics:
    checkpoints: list[int]
    counts: list[int]
    phi: list[float]
    deviations: list[float]
    seed: int | None = None
    sample_id: int | None = None
    metadata: dict = field(default_factory=dict)

    @classmethod
    def build(cls, checkpoints, counts, phi, eps=DEFAULT_EPS, **kw) -> "HitStatistics":
        counts = [int(c) for c in counts]
        phi = [float(p) for p in phi]
        devs = [deviation_statistic(c, p, eps) for c, p in zip(counts, phi)]
        return cls(list(map(int, checkpoints)), counts, phi, devs, **kw)

    def rows(self):
        for N, c, p, d in zip(self.checkpoints, self.counts, self.phi, self.deviations):
            yield {"sample_id": self.sample_id, "N": N, "count": c, "phi": p, "deviation": d}


def check_checkpoints(checkpoints) -> list[int]:
    cps = [int(c) for c in checkpoints]
    if any(c < 0 for c in cps):
        raise ValueError("checkpoints must be non-negative")
    if any(b <= a for a, b in zip(cps, cps[1:])):
        raise ValueError("checkpoints must be strictly increasing")
    return cps


def counts_at(hit_mask: np.ndarray, checkpoints: list[int]) -> list[int]:
    """Cumulative hit counts of a 0-indexed step mask (entry n-1 is step n)."""
    cs = np.concatenate([[0], np.cumsum(hit_mask, dtype=np.int64)])
    return [int(cs[c]) for c in checkpoints]


def mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    if v.size == 1:
        return float(v[0]), math.inf
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def proportion_se(p: float, n: int) -> float:
    """CLT standard error of a proportion; rule-of-three style when p is 0 or 1."""
    if n <= 0:
        return math.inf
    if p <= 0 or p >= 1:
        return 3.0 / n / 1.96
    return math.sqrt(p * (1 - p) / n)


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x over positive pairs."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])
