"""Paired nonparametric statistics: percentile bootstrap CIs and the Wilcoxon signed-rank test."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from . import defaults

EXACT_MAX_N = 25
MIN_N = 5


class StatisticsError(ValueError):
    pass


def bootstrap_ci(values, statistic: str = "mean", n_boot: int = defaults.BOOTSTRAP_SAMPLES,
                 level: float = defaults.CONFIDENCE_LEVEL, seed: int = 0,
                 chunk: int = 1000) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean or median."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if len(x) == 0:
        raise StatisticsError("bootstrap_ci needs a non-empty sample")
    if len(x) < 2:
        raise StatisticsError("bootstrap_ci needs at least 2 values")
    if not 0 < level < 1:
        raise StatisticsError("level must lie in (0, 1)")
    func = {"mean": np.mean, "median": np.median}.get(statistic)
    if func is None:
        raise StatisticsError(f"unknown statistic {statistic!r}")
    rng = np.random.default_rng(seed)
    stats = np.empty(n_boot)
    for start in range(0, n_boot, chunk):
        stop = min(start + chunk, n_boot)
        idx = rng.integers(0, len(x), size=(stop - start, len(x)))
        stats[start:stop] = func(x[idx], axis=1)
    alpha = 1.0 - level
    lo, hi = np.quantile(stats, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), float(hi)


def _nonzero_differences(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise StatisticsError(f"paired samples differ in length: {len(a)} vs {len(b)}")
    d = a - b
    d = d[d != 0]
    if len(d) == 0:
        raise StatisticsError("all paired differences are zero; the signed-rank test is undefined")
    if len(d) < MIN_N:
        raise StatisticsError(f"need >= {MIN_N} non-zero differences, got {len(d)}")
    return d


def signed_rank_null(doubled_ranks) -> np.ndarray:
    """Counts of sign patterns per value of 2*W+ (positive-rank sum) under H0."""
    ranks = [int(r) for r in doubled_ranks]
    counts = np.zeros(sum(ranks) + 1, dtype=np.int64)
    counts[0] = 1
    for r in ranks:
        counts[r:] = counts[r:] + counts[:-r]
    return counts


def wilcoxon_signed_rank(a, b) -> float:
    """Two-sided p-value of the paired signed-rank test on a - b (zero differences dropped).

    Exact null distribution (midranks for ties) for n <= 25; normal approximation
    with tie and continuity corrections above.
    """
    d = _nonzero_differences(a, b)
    n = len(d)
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if n <= EXACT_MAX_N:
        doubled = np.rint(2 * ranks).astype(np.int64)
        counts = signed_rank_null(doubled)
        t = int(round(2 * w_plus))
        total = float(2 ** n)
        lower = counts[:t + 1].sum() / total
        upper = counts[t:].sum() / total
        return float(min(1.0, 2.0 * min(lower, upper)))
    mu = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts**3 - tie_counts) / 48.0
    z = max(abs(w_plus - mu) - 0.5, 0.0) / math.sqrt(var)
    return float(min(1.0, math.erfc(z / math.sqrt(2.0))))


@dataclass
class PairedStats:
    n: int
    mean_diff: float
    median_diff: float
    mean_ci: tuple
    median_ci: tuple
    wilcoxon_p: float
    better_fraction: float
    n_boot: int
    level: float
    seed: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean_ci"] = list(self.mean_ci)
        d["median_ci"] = list(self.median_ci)
        return d


def paired_stats(a, b, n_boot: int = defaults.BOOTSTRAP_SAMPLES,
                 level: float = defaults.CONFIDENCE_LEVEL, seed: int = 0) -> PairedStats:
    """Compare per-sample errors `a` against `b` (lower is better) on the paired differences a - b."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    p = wilcoxon_signed_rank(a, b)
    d = a - b
    return PairedStats(
        n=len(d), mean_diff=float(d.mean()), median_diff=float(np.median(d)),
        mean_ci=bootstrap_ci(d, "mean", n_boot, level, seed),
        median_ci=bootstrap_ci(d, "median", n_boot, level, seed),
        wilcoxon_p=p, better_fraction=float(np.mean(a < b)),
        n_boot=n_boot, level=level, seed=seed,
    )
