"""Hypothesis-testing helpers shared by tests and experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

MIN_KS_SAMPLES = 20


@dataclass(frozen=True)
class KSResult:
    D: float
    p: float
    n: float

    def __iter__(self):
        return iter((self.D, self.p))


def _clean(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < MIN_KS_SAMPLES:
        raise ValueError(f"KS test needs at least {MIN_KS_SAMPLES} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    return x


def ks_test(samples, cdf) -> KSResult:
    """One-sample KS statistic with the asymptotic (Kolmogorov) p-value."""
    x = _clean(samples)
    res = stats.kstest(x, cdf, method="asymp")
    return KSResult(float(res.statistic), float(res.pvalue), float(x.size))


def ks_2samp(a, b) -> KSResult:
    a, b = _clean(a), _clean(b)
    res = stats.ks_2samp(a, b, method="asymp")
    return KSResult(float(res.statistic), float(res.pvalue), a.size * b.size / (a.size + b.size))


def ess(weights) -> float:
    """Kish effective sample size of non-negative weights."""
    w = np.asarray(weights, dtype=float)
    s = w.sum()
    if s <= 0:
        return 0.0
    return float(s * s / np.sum(w * w))


def weighted_ecdf(samples, weights) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(samples, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order]
    return x, np.cumsum(w) / w.sum()


def weighted_ks(samples, weights, cdf) -> KSResult:
    """KS against ``cdf`` for a self-normalised weighted sample; ``n`` is the ESS.

    The p-value uses the Kolmogorov limit law at ``sqrt(ESS) * D``.
    """
    x = _clean(samples)
    w = np.asarray(weights, dtype=float).ravel()
    if w.shape != x.shape or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be non-negative, not all zero, one per sample")
    keep = w > 0
    xs, F = weighted_ecdf(x[keep], w[keep])
    G = np.asarray(cdf(xs), dtype=float)
    F_left = np.concatenate([[0.0], F[:-1]])
    D = float(max(np.max(F - G), np.max(G - F_left)))
    n = ess(w)
    p = float(stats.kstwobign.sf(math.sqrt(n) * D))
    return KSResult(D, p, n)


def weighted_mean_se(values, weights) -> tuple[float, float]:
    """Self-normalised mean and its delta-method standard error."""
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    m = float(np.sum(w * v))
    se = float(math.sqrt(np.sum(w * w * (v - m) ** 2)))
    return m, se


def mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def within_ci(value: float, target: float, se: float, k: float = 3.0) -> bool:
    return abs(value - target) <= k * se


def trend_test(values, ladder=None) -> tuple[float, float]:
    """(least-squares slope against the ladder index, fraction of adjacent decreases)."""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        raise ValueError("trend test needs a ladder of length >= 3")
    x = np.arange(v.size, dtype=float) if ladder is None else np.asarray(ladder, dtype=float)
    slope = float(np.polyfit(x, v, 1)[0])
    if abs(slope) < 1e-12 * max(1.0, float(np.max(np.abs(v)))):
        slope = 0.0
    frac = float(np.mean(np.diff(v) < 0))
    return slope, frac


def strictly_decreasing(values) -> bool:
    return bool(np.all(np.diff(np.asarray(values, dtype=float)) < 0))
