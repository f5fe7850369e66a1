"""Binomial tails in log space and confidence intervals."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats
from scipy.special import gammaln, logsumexp


def _log_pmf(n: int, p: float, j: np.ndarray) -> np.ndarray:
    log_comb = gammaln(n + 1) - gammaln(j + 1) - gammaln(n - j + 1)
    with np.errstate(divide="ignore"):
        return log_comb + j * math.log(p) + (n - j) * math.log1p(-p)


def log_binom_tail(n: int, p: float, k: int) -> float:
    """Natural log of P(X >= k) for X ~ Binomial(n, p).

    Summed term by term with ``logsumexp`` so values far below the double
    underflow limit (1e-308) are still represented.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    k = max(int(k), 0)
    if k == 0:
        return 0.0
    if k > n:
        return -math.inf
    if p == 0.0:
        return -math.inf
    if p == 1.0:
        return 0.0
    j = np.arange(k, n + 1, dtype=float)
    return min(float(logsumexp(_log_pmf(n, p, j))), 0.0)


def log_binom_cdf(n: int, p: float, k: int) -> float:
    """Natural log of P(X <= k) for X ~ Binomial(n, p)."""
    k = int(k)
    if k < 0:
        return -math.inf
    if k >= n:
        return 0.0
    # P(X <= k) = P(n - X >= n - k), and n - X ~ Binomial(n, 1 - p)
    return log_binom_tail(n, 1.0 - p, n - k)


def binom_tail(n: int, p: float, k: int) -> float:
    """P(X >= k) for X ~ Binomial(n, p); see :func:`log_binom_tail`."""
    return math.exp(log_binom_tail(n, p, k))


def log_binom_tails_all(n: int, p: float) -> np.ndarray:
    """Array ``a`` of length n + 2 with ``a[k] = log P(X >= k)``, k = 0..n+1."""
    out = np.full(n + 2, -math.inf)
    out[0] = 0.0
    if p == 0.0:
        return out
    if p == 1.0:
        out[: n + 1] = 0.0
        return out
    lp = _log_pmf(n, p, np.arange(n + 1, dtype=float))
    out[: n + 1] = np.logaddexp.accumulate(lp[::-1])[::-1]
    return np.minimum(out, 0.0)


def clopper_pearson(successes: int, trials: int, confidence: float = 0.99) -> tuple[float, float]:
    """Two-sided exact binomial confidence interval."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    alpha = 1.0 - confidence
    lo = 0.0 if successes == 0 else float(stats.beta.ppf(alpha / 2, successes, trials - successes + 1))
    hi = 1.0 if successes == trials else float(stats.beta.ppf(1 - alpha / 2, successes + 1, trials - successes))
    return lo, hi


def clopper_pearson_upper(successes: int, trials: int, confidence: float = 0.99) -> float:
    """One-sided exact upper confidence bound on a Bernoulli rate."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    if successes >= trials:
        return 1.0
    return float(stats.beta.ppf(confidence, successes + 1, trials - successes))


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval; degenerate (1, 1) or (0, 0) only in the limit."""
    if trials <= 0:
        return (math.nan, math.nan)
    phat = successes / trials
    denom = 1 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def standard_error(p: float, trials: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / trials)
