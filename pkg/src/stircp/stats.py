"""Monte Carlo estimate records and small statistical helpers."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2 as _chi2

_Z95 = 1.959963984540054


@dataclass(frozen=True)
class Estimate:
    """Point estimate with a Wilson 95% interval and seed provenance.

    ``excluded`` counts replicas dropped by hygiene rules (e.g. wrap flags);
    they are not part of the denominator of ``mean``.
    """

    mean: float
    ci_low: float
    ci_high: float
    replicas: int
    excluded: int
    seed: int

    def to_json(self) -> dict:
        return {
            "mean": self.mean,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "replicas": self.replicas,
            "excluded": self.excluded,
            "seed": self.seed,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=False)


def wilson(successes: int, trials: int) -> tuple[float, float, float]:
    """Wilson 95% interval for a binomial proportion; returns (mean, lo, hi)."""
    if trials <= 0:
        return float("nan"), 0.0, 1.0
    phat = successes / trials
    z2 = _Z95 * _Z95
    denom = 1.0 + z2 / trials
    center = (phat + z2 / (2 * trials)) / denom
    half = (
        _Z95
        * math.sqrt(phat * (1.0 - phat) / trials + z2 / (4.0 * trials * trials))
        / denom
    )
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return phat, lo, hi


def binomial_estimate(successes: int, trials: int, seed: int, excluded: int = 0) -> Estimate:
    mean, lo, hi = wilson(successes, trials)
    return Estimate(mean, lo, hi, trials, excluded, seed)


def mean_estimate(values: np.ndarray, seed: int, excluded: int = 0) -> Estimate:
    """Normal-approximation interval for a real-valued sample mean."""
    n = len(values)
    m = float(np.mean(values)) if n else float("nan")
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(m, m - _Z95 * se, m + _Z95 * se, n, excluded, seed)


def chi2_two_sample(counts_a, counts_b, min_expected: float = 5.0):
    """Two-sample chi-square homogeneity test on aligned histograms.

    Cells with pooled expected count below ``min_expected`` are merged into
    an overflow cell.  Returns (statistic, dof, pvalue).
    """
    a = np.asarray(counts_a, dtype=np.float64)
    b = np.asarray(counts_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("histograms must be aligned")
    na, nb = a.sum(), b.sum()
    pooled = a + b
    keep = []
    rest_a = rest_b = 0.0
    exp_scale = min(na, nb) / (na + nb)
    for i in range(len(a)):
        if pooled[i] * exp_scale >= min_expected:
            keep.append(i)
        else:
            rest_a += a[i]
            rest_b += b[i]
    cells_a = [a[i] for i in keep]
    cells_b = [b[i] for i in keep]
    if rest_a + rest_b > 0:
        cells_a.append(rest_a)
        cells_b.append(rest_b)
    cells_a = np.array(cells_a)
    cells_b = np.array(cells_b)
    k = len(cells_a)
    if k < 2:
        return 0.0, 0, 1.0
    stat = 0.0
    for i in range(k):
        tot = cells_a[i] + cells_b[i]
        ea = tot * na / (na + nb)
        eb = tot * nb / (na + nb)
        if ea > 0:
            stat += (cells_a[i] - ea) ** 2 / ea
        if eb > 0:
            stat += (cells_b[i] - eb) ** 2 / eb
    dof = k - 1
    return float(stat), dof, float(_chi2.sf(stat, dof))


def subseed(seed: int, index: int) -> int:
    """Stable 63-bit child seed; used to key per-replica mark sets."""
    x = (seed * 0x9E3779B97F4A7C15 + index * 0xBF58476D1CE4E5B9 + 0x94D049BB133111EB) % (1 << 64)
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) % (1 << 64)
    x ^= x >> 27
    return x % (1 << 63)
