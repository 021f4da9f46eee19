"""Cached normal/t quantiles.

scipy's ppf costs tens of microseconds per call; Monte-Carlo drivers ask
for the same quantile millions of times.
"""

from functools import lru_cache

from scipy.stats import norm, t as t_dist


@lru_cache(maxsize=None)
def z_quantile(alpha: float) -> float:
    """Two-sided normal critical value z_{1 - alpha/2}."""
    return float(norm.ppf(1.0 - alpha / 2.0))


@lru_cache(maxsize=None)
def t_quantile(alpha: float, df: int) -> float:
    """Two-sided t critical value t_{1 - alpha/2}(df)."""
    return float(t_dist.ppf(1.0 - alpha / 2.0, df))
