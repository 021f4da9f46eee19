"""Variance of an average metric under cluster randomization.

When the randomization unit (e.g. user) is coarser than the analysis unit
(e.g. page view), the metric sum(Y_ij) / sum(N_i) is a ratio of two means
of i.i.d. per-cluster quantities (S_i, N_i), so its variance follows from
the same linearization as any ratio metric. The naive i.i.d. formula and
the classic equal-size closed form are provided for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._dist import z_quantile
from .errors import InputDomainError, InsufficientDataError
from .ratio import ConfidenceInterval

__all__ = ["ClusterSummary", "ClusterEstimate", "summarize",
           "delta_variance", "naive_variance", "donner_variance",
           "difference_of_means"]


@dataclass(frozen=True)
class ClusterSummary:
    """Per-cluster sums and sizes plus the cross moments over clusters.

    ``s`` holds within-cluster sums S_i and ``n`` the cluster sizes N_i,
    aligned with ``cluster_ids``. ``total_sumsq`` (sum of squared
    unit-level values) is carried so the naive variance needs no second
    pass over raw data.
    """

    cluster_ids: np.ndarray
    s: np.ndarray
    n: np.ndarray
    total_sumsq: float

    @property
    def k(self) -> int:
        return int(self.n.size)

    @property
    def total_count(self) -> int:
        return int(self.n.sum())

    @property
    def total_sum(self) -> float:
        return float(self.s.sum())

    @property
    def mean(self) -> float:
        """The average metric sum(S_i) / sum(N_i)."""
        return self.total_sum / self.total_count

    @property
    def mean_s(self) -> float:
        return float(self.s.mean())

    @property
    def mean_n(self) -> float:
        return float(self.n.mean())

    def cross_moments(self) -> tuple:
        """(var_s, var_n, cov_sn) across clusters, n-1 divisors."""
        if self.k < 2:
            raise InsufficientDataError("cluster moments require K >= 2 clusters")
        ds = self.s - self.s.mean()
        dn = self.n - self.n.mean()
        km1 = self.k - 1
        return (float(ds @ ds) / km1, float(dn @ dn) / km1, float(ds @ dn) / km1)

    def merge(self, other: "ClusterSummary") -> "ClusterSummary":
        """Combine shards; clusters must not straddle shards."""
        overlap = np.intersect1d(self.cluster_ids, other.cluster_ids)
        if overlap.size:
            raise InputDomainError(
                f"clusters straddle shards (e.g. {overlap[0]!r}); "
                "shard by randomization unit before summarizing")
        return ClusterSummary(
            cluster_ids=np.concatenate([self.cluster_ids, other.cluster_ids]),
            s=np.concatenate([self.s, other.s]),
            n=np.concatenate([self.n, other.n]),
            total_sumsq=self.total_sumsq + other.total_sumsq,
        )


@dataclass(frozen=True)
class ClusterEstimate:
    mean: float
    variance: float
    method: str

    @property
    def se(self) -> float:
        return math.sqrt(self.variance)

    def ci(self, alpha: float = 0.05) -> ConfidenceInterval:
        h = z_quantile(alpha) * self.se
        return ConfidenceInterval(point=self.mean, lower=self.mean - h,
                                  upper=self.mean + h, alpha=alpha,
                                  se=self.se, method=self.method)


def summarize(unit_ids, values) -> ClusterSummary:
    """Aggregate unit-level observations into per-cluster (S_i, N_i).

    ``unit_ids`` are randomization-unit labels (hashable/orderable);
    ``values`` the analysis-unit observations.
    """
    values = np.asarray(values, dtype=float)
    unit_ids = np.asarray(unit_ids)
    if values.size == 0:
        raise InputDomainError("no observations")
    if unit_ids.shape != values.shape:
        raise InputDomainError("unit_ids and values must have equal length")
    if not np.all(np.isfinite(values)):
        raise InputDomainError("non-finite observation")
    ids, codes = np.unique(unit_ids, return_inverse=True)
    s = np.bincount(codes, weights=values)
    n = np.bincount(codes)
    return ClusterSummary(cluster_ids=ids, s=s, n=n.astype(np.int64),
                          total_sumsq=float(values @ values))


def delta_variance(cs: ClusterSummary) -> ClusterEstimate:
    """Linearization-based variance of the average metric.

    var = (var_s - 2*(S/N)*cov_sn + (S/N)^2*var_n) / (K * mean_n^2) with
    plug-in sample moments; equivalently the variance of S_i centered by a
    multiple of N_i rather than by a constant.
    """
    if cs.k < 2:
        raise InsufficientDataError("delta variance requires K >= 2 clusters")
    var_s, var_n, cov_sn = cs.cross_moments()
    ratio = cs.mean_s / cs.mean_n
    v = (var_s - 2.0 * ratio * cov_sn + ratio * ratio * var_n)
    v /= cs.k * cs.mean_n ** 2
    return ClusterEstimate(mean=cs.mean, variance=max(0.0, v), method="delta")


def naive_variance(cs: ClusterSummary) -> ClusterEstimate:
    """Variance pretending all unit-level observations are i.i.d."""
    m = cs.total_count
    if m < 2:
        raise InsufficientDataError("naive variance requires >= 2 observations")
    mean = cs.mean
    ss = cs.total_sumsq - m * mean * mean
    sample_var = max(0.0, ss) / (m - 1)
    return ClusterEstimate(mean=mean, variance=sample_var / m, method="naive")


def donner_variance(sigma2: float, tau2: float, k: int, m: int) -> float:
    """Closed-form variance for equal cluster sizes and a shared sigma.

    ((sigma2 + tau2) / (K m)) * (1 + (m - 1) rho), with intra-cluster
    correlation rho = tau2 / (sigma2 + tau2); 0 when both variances vanish.
    """
    if sigma2 < 0 or tau2 < 0:
        raise InputDomainError("variance components must be nonnegative")
    if k < 1 or m < 1:
        raise InputDomainError("K and m must be positive")
    total = sigma2 + tau2
    if total == 0.0:
        return 0.0
    rho = tau2 / total
    return total / (k * m) * (1.0 + (m - 1) * rho)


def difference_of_means(treatment: ClusterSummary,
                        control: ClusterSummary) -> ClusterEstimate:
    """ATE of two independently randomized groups: difference of average
    metrics with summed delta variances."""
    et = delta_variance(treatment)
    ec = delta_variance(control)
    return ClusterEstimate(mean=et.mean - ec.mean,
                           variance=et.variance + ec.variance,
                           method="delta-ate")
