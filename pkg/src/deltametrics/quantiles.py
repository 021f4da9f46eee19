"""Sample quantiles with confidence intervals for clustered data.

The sample quantile at probability p is the order statistic X_(floor(np)).
The confidence interval is an *outer* interval: two order statistics whose
ranks come from inverting the normal approximation of the indicator mean
1{X_i <= quantile}. With clustered observations the indicator mean's
variance is a clustered ratio variance rather than p(1-p)/n; the
correction can be applied before choosing ranks (pre-adjustment) or by
rescaling the i.i.d. interval afterwards (post-adjustment, one selection
pass). A cluster bootstrap is included as a simulation baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._dist import z_quantile
from .cluster import delta_variance, summarize
from .errors import InputDomainError, InsufficientDataError

__all__ = ["QuantileEstimate", "select_ranks", "outer_ci_pre",
           "outer_ci_post", "bootstrap_ci"]


@dataclass(frozen=True)
class QuantileEstimate:
    """Quantile point estimate with an outer confidence interval.

    ``sigma`` is the clustered sqrt(n * var) of the indicator mean and
    ``correction`` its ratio to the i.i.d. sqrt(p(1-p)); both are None for
    the bootstrap, which does not estimate them.
    """

    value: float
    lower: float
    upper: float
    p: float
    alpha: float
    lower_rank: int
    upper_rank: int
    method: str
    sigma: float | None = None
    correction: float | None = None
    warnings: tuple = ()

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def _validated(values, unit_ids, p, alpha):
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size < 2:
        raise InsufficientDataError("need at least 2 observations")
    if not np.all(np.isfinite(values)):
        raise InputDomainError("non-finite observation")
    if not 0.0 < p < 1.0:
        raise InputDomainError(f"p must be in (0, 1), got {p}")
    if not 0.0 < alpha < 1.0:
        raise InputDomainError(f"alpha must be in (0, 1), got {alpha}")
    unit_ids = np.asarray(unit_ids)
    if unit_ids.shape != values.shape:
        raise InputDomainError("unit_ids and values must have equal length")
    return values, unit_ids


def select_ranks(values, ranks) -> dict:
    """Values at the requested 1-based ranks of the ascending order.

    Uses multi-pivot introselect, which shares partitioning work across
    all requested ranks instead of sorting the whole array.
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    ranks = sorted(set(int(r) for r in ranks))
    if not ranks:
        return {}
    if ranks[0] < 1 or ranks[-1] > n:
        raise InputDomainError(f"ranks must lie in [1, {n}]")
    kth = [r - 1 for r in ranks]
    part = np.partition(values, kth)
    return {r: float(part[r - 1]) for r in ranks}


def _point_rank(n: int, p: float) -> int:
    return max(1, math.floor(n * p))


def _clustered_sigma(values, unit_ids, threshold: float) -> float:
    """sqrt(n * var) of the mean of 1{X <= threshold} under clustering."""
    y = (values <= threshold).astype(float)
    cs = summarize(unit_ids, y)
    if cs.k < 2:
        raise InsufficientDataError("clustered sigma requires >= 2 clusters")
    v = delta_variance(cs).variance
    return math.sqrt(values.size * v)


def _outer_ranks(n: int, p: float, z: float, sigma: float) -> tuple:
    half = z * sigma / math.sqrt(n)
    lo = math.floor(n * (p - half))
    hi = math.ceil(n * (p + half)) + 1
    return min(n, max(1, lo)), min(n, max(1, hi))


def outer_ci_pre(values, unit_ids, p: float, alpha: float = 0.05) -> QuantileEstimate:
    """Outer interval with the clustered correction applied to the ranks.

    Needs two selection passes: one for the point estimate (whose value
    defines the indicators), one for the interval endpoints.
    """
    values, unit_ids = _validated(values, unit_ids, p, alpha)
    n = values.size
    k = _point_rank(n, p)
    value = select_ranks(values, [k])[k]
    sigma = _clustered_sigma(values, unit_ids, value)
    lo_rank, hi_rank = _outer_ranks(n, p, z_quantile(alpha), sigma)
    ends = select_ranks(values, [lo_rank, hi_rank])
    lower, upper = ends[lo_rank], ends[hi_rank]
    warn = ("zero-width",) if lower == upper else ()
    return QuantileEstimate(value=value, lower=lower, upper=upper, p=p,
                            alpha=alpha, lower_rank=lo_rank, upper_rank=hi_rank,
                            method="outer-pre", sigma=sigma,
                            correction=sigma / math.sqrt(p * (1.0 - p)),
                            warnings=warn)


def outer_ci_post(values, unit_ids, p: float, alpha: float = 0.05) -> QuantileEstimate:
    """Outer interval from i.i.d. ranks, rescaled by the clustered sigma.

    All three order statistics come from one selection pass; the clustered
    correction c = sigma / sqrt(p(1-p)) then scales the two half-widths
    around the point estimate.
    """
    values, unit_ids = _validated(values, unit_ids, p, alpha)
    n = values.size
    k = _point_rank(n, p)
    sigma0 = math.sqrt(p * (1.0 - p))
    lo_rank, hi_rank = _outer_ranks(n, p, z_quantile(alpha), sigma0)
    picked = select_ranks(values, [lo_rank, k, hi_rank])
    value = picked[k]
    sigma = _clustered_sigma(values, unit_ids, value)
    c = sigma / sigma0
    lower = value - c * (value - picked[lo_rank])
    upper = value + c * (picked[hi_rank] - value)
    warn = ()
    if picked[lo_rank] == value and picked[hi_rank] == value:
        # unadjusted interval has no width for the correction to scale
        warn = ("zero-width",)
    return QuantileEstimate(value=value, lower=lower, upper=upper, p=p,
                            alpha=alpha, lower_rank=lo_rank, upper_rank=hi_rank,
                            method="outer-post", sigma=sigma, correction=c,
                            warnings=warn)


def bootstrap_ci(values, unit_ids, p: float, alpha: float = 0.05,
                 replicates: int = 1000, seed: int = 0) -> QuantileEstimate:
    """Percentile interval from a cluster bootstrap.

    Clusters (not observations) are resampled with replacement, since
    observation-level resampling would ignore exactly the dependence this
    interval exists to handle. Each replicate's quantile is computed by
    weighting the once-sorted sample by cluster multiplicities, which is
    equivalent to materializing the resampled data set.
    """
    values, unit_ids = _validated(values, unit_ids, p, alpha)
    if replicates < 100:
        raise InputDomainError("bootstrap needs at least 100 replicates")
    _, codes = np.unique(unit_ids, return_inverse=True)
    n_clusters = int(codes.max()) + 1
    if n_clusters < 2:
        raise InsufficientDataError("cluster bootstrap requires >= 2 clusters")
    n = values.size
    k = _point_rank(n, p)
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    sorted_codes = codes[order]
    value = float(sorted_vals[k - 1])

    reps = np.empty(replicates)
    base = np.random.Philox(key=np.array([seed, 0], dtype=np.uint64))
    for r in range(replicates):
        rng = np.random.Generator(base.jumped(r))
        counts = np.bincount(rng.integers(0, n_clusters, n_clusters),
                             minlength=n_clusters)
        w = counts[sorted_codes]
        cum = np.cumsum(w)
        target = max(1, math.floor(cum[-1] * p))
        reps[r] = sorted_vals[np.searchsorted(cum, target, side="left")]
    lower, upper = np.quantile(reps, [alpha / 2.0, 1.0 - alpha / 2.0])
    warn = ("zero-width",) if lower == upper else ()
    return QuantileEstimate(value=value, lower=float(lower), upper=float(upper),
                            p=p, alpha=alpha, lower_rank=k, upper_rank=k,
                            method="bootstrap", warnings=warn)
