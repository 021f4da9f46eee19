"""Gaussian random-intercept linear mixed model fitted by REML.

The only random effect is a per-cluster intercept, which makes the
covariance of each cluster a rank-one update of the identity. Everything
then reduces to per-cluster sufficient statistics and a one-dimensional
profile of the restricted likelihood over the variance ratio
lambda = tau^2 / sigma^2; no matrix larger than the fixed-effect dimension
is ever inverted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from ._dist import z_quantile
from .errors import InputDomainError, InsufficientDataError
from .ratio import ConfidenceInterval

__all__ = ["LmmFit", "fit_random_intercept", "weighted_cluster_mean",
           "reml_objective"]

_LOG10_LAMBDA_BOUNDS = (-8.0, 8.0)


@dataclass(frozen=True)
class LmmFit:
    """REML estimates for the random-intercept model."""

    beta: np.ndarray
    se_beta: np.ndarray
    cov_beta: np.ndarray
    tau2: float
    sigma2: float
    lambda_: float
    blups: np.ndarray
    cluster_ids: np.ndarray
    cluster_sizes: np.ndarray
    n_obs: int
    warnings: tuple = ()

    def ci(self, index: int = 0, alpha: float = 0.05) -> ConfidenceInterval:
        b, se = float(self.beta[index]), float(self.se_beta[index])
        h = z_quantile(alpha) * se
        return ConfidenceInterval(point=b, lower=b - h, upper=b + h,
                                  alpha=alpha, se=se, method="lmm")


class _Suff:
    """Per-cluster sufficient statistics for the profile likelihood."""

    def __init__(self, cluster_ids, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
            raise InputDomainError("X must be (n, p) and y length n")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InputDomainError("non-finite value in design or response")
        ids, codes = np.unique(np.asarray(cluster_ids), return_inverse=True)
        if ids.size < 2:
            raise InsufficientDataError("mixed model requires >= 2 clusters")
        n, p = X.shape
        if n <= p:
            raise InsufficientDataError("more parameters than observations")
        if np.linalg.matrix_rank(X) < p:
            raise InputDomainError("rank-deficient fixed-effect design")
        self.ids = ids
        self.n, self.p = n, p
        self.sizes = np.bincount(codes).astype(np.int64)
        self.xtx = X.T @ X
        self.xty = X.T @ y
        self.yty = float(y @ y)
        self.xsum = np.empty((ids.size, p))
        for j in range(p):
            self.xsum[:, j] = np.bincount(codes, weights=X[:, j])
        self.ysum = np.bincount(codes, weights=y)

    def gls(self, lam: float):
        """GLS pieces at a fixed variance ratio.

        Returns (beta, M, rss) where M = X' W X for the whitening weights
        W_i = I - lam/(1 + lam n_i) * J_i, and rss is the GLS residual sum
        of squares y'Wy - beta'X'Wy.
        """
        c = lam / (1.0 + lam * self.sizes)
        m = self.xtx - (self.xsum * c[:, None]).T @ self.xsum
        b = self.xty - self.xsum.T @ (c * self.ysum)
        q = self.yty - float(c @ (self.ysum * self.ysum))
        beta = np.linalg.solve(m, b)
        rss = q - float(beta @ b)
        return beta, m, max(rss, 1e-300)

    def objective(self, log10_lam: float) -> float:
        """Profiled -2 restricted log-likelihood, constants dropped."""
        lam = 10.0 ** log10_lam
        _, m, rss = self.gls(lam)
        sign, logdet_m = np.linalg.slogdet(m)
        if sign <= 0:
            return math.inf
        df = self.n - self.p
        return (df * math.log(rss / df)
                + float(np.log1p(lam * self.sizes).sum())
                + logdet_m)


def reml_objective(cluster_ids, X, y, lam: float) -> float:
    """Profiled REML criterion at a given lambda (for diagnostics/tests)."""
    return _Suff(cluster_ids, X, y).objective(math.log10(lam))


def fit_random_intercept(cluster_ids, X, y) -> LmmFit:
    """Fit y = X beta + b_cluster + e by REML.

    The design ``X`` must contain an intercept column (conventionally the
    first). The variance ratio is found by bounded scalar minimization of
    the profiled restricted likelihood on log10(lambda) in [-8, 8]; landing
    on a bound is reported in ``warnings`` rather than raised, since a
    boundary solution (tau2 ~ 0) is a legitimate fit.
    """
    suff = _Suff(cluster_ids, X, y)
    res = minimize_scalar(suff.objective, bounds=_LOG10_LAMBDA_BOUNDS,
                          method="bounded", options={"xatol": 1e-8})
    log10_lam = float(res.x)
    warnings = ()
    lo, hi = _LOG10_LAMBDA_BOUNDS
    if log10_lam - lo < 1e-4 or hi - log10_lam < 1e-4:
        warnings += ("lambda-at-boundary",)
    if np.all(suff.sizes == 1):
        # one observation per cluster: tau2 and sigma2 are not separable
        warnings += ("non-identifiable-singleton-clusters",)

    lam = 10.0 ** log10_lam
    beta, m, rss = suff.gls(lam)
    sigma2 = rss / (suff.n - suff.p)
    tau2 = lam * sigma2
    cov_beta = sigma2 * np.linalg.inv(m)
    resid_sum = suff.ysum - suff.xsum @ beta
    blups = lam * resid_sum / (1.0 + lam * suff.sizes)
    return LmmFit(beta=beta, se_beta=np.sqrt(np.diag(cov_beta)),
                  cov_beta=cov_beta, tau2=tau2, sigma2=sigma2, lambda_=lam,
                  blups=blups, cluster_ids=suff.ids,
                  cluster_sizes=suff.sizes, n_obs=suff.n, warnings=warnings)


def weighted_cluster_mean(fit: LmmFit, sizes) -> float:
    """Size-weighted population mean from the fitted cluster means.

    The intercept of a random-intercept fit estimates the *unweighted*
    average of cluster means; weighting each predicted cluster mean
    (intercept + BLUP) by its cluster size recovers the population average
    of unit-level observations.
    """
    sizes = np.asarray(sizes, dtype=float)
    if sizes.shape != fit.blups.shape:
        raise InputDomainError("one size per fitted cluster is required")
    alpha_hat = float(fit.beta[0])
    return float((alpha_hat + fit.blups) @ sizes / sizes.sum())
