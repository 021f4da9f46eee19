"""Within-subject (cross-over) treatment effects under missing data.

Users in group I receive treatment in period 1 and control in period 2;
group II the reverse. Observations can be missing in any pattern. Each
possibly-missing value is augmented to a presence-indicator/value pair
(I_it, X_it) with (0, 0) when absent, which makes every period metric a
ratio of complete-data means: mean(X_t) over observed users equals
sum(X_it) / sum(I_it) exactly. The covariance of the four augmented means
per group is estimated directly, pushed through the ratio linearization,
and the cross-over model mu = (theta1 + delta, theta2, theta1,
theta2 + delta) is fitted by generalized least squares with that
covariance treated as known.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import lmm
from ._dist import z_quantile
from .errors import (
    DegenerateDataError,
    InputDomainError,
    InsufficientDataError,
)
from .moments import QuadMoments
from .ratio import ConfidenceInterval

__all__ = ["AugmentedPanel", "GroupMetricVector", "CrossoverFit",
           "DecompositionReport", "augment", "metric_cov", "fit_crossover",
           "fit_crossover_lmm", "decompose_complete_incomplete"]

_GROUP_ALIASES = {"i": "I", "1": "I", "ii": "II", "2": "II"}

# maps (theta1, theta2, delta) to the cell means
# (group I period 1, group I period 2, group II period 1, group II period 2)
_DESIGN = np.array([[1.0, 0.0, 1.0],
                    [0.0, 1.0, 0.0],
                    [1.0, 0.0, 0.0],
                    [0.0, 1.0, 1.0]])


def _canon_group(label) -> str:
    g = _GROUP_ALIASES.get(str(label).strip().lower())
    if g is None:
        raise InputDomainError(f"unknown group label {label!r} (want I or II)")
    return g


@dataclass(frozen=True)
class AugmentedPanel:
    """Per-user (I_1, X_1, I_2, X_2) rows after augmentation.

    X is 0 wherever I is 0; users absent from both periods are dropped,
    which leaves every period metric unchanged.
    """

    user_ids: np.ndarray
    group: np.ndarray
    i1: np.ndarray
    x1: np.ndarray
    i2: np.ndarray
    x2: np.ndarray

    @property
    def n_users(self) -> int:
        return int(self.user_ids.size)

    def for_group(self, label: str) -> "AugmentedPanel":
        mask = self.group == _canon_group(label)
        return AugmentedPanel(self.user_ids[mask], self.group[mask],
                              self.i1[mask], self.x1[mask],
                              self.i2[mask], self.x2[mask])

    def period_metric(self, period: int) -> float:
        """Mean of observed values in a period, as a ratio of augmented means."""
        i = self.i1 if period == 1 else self.i2
        x = self.x1 if period == 1 else self.x2
        denom = i.sum()
        if denom == 0:
            raise DegenerateDataError(f"no observations in period {period}")
        return float(x.sum() / denom)

    def long_format(self) -> tuple:
        """Observed rows as (user_ids, design [1, treated, period2], y).

        Group I is treated in period 1, group II in period 2.
        """
        rows_u, rows_x, rows_y = [], [], []
        for period, ind, val in ((1, self.i1, self.x1), (2, self.i2, self.x2)):
            mask = ind == 1
            treated = ((self.group[mask] == "I") if period == 1
                       else (self.group[mask] == "II")).astype(float)
            rows_u.append(self.user_ids[mask])
            rows_x.append(np.column_stack([
                np.ones(int(mask.sum())), treated,
                np.full(int(mask.sum()), float(period == 2))]))
            rows_y.append(val[mask])
        return (np.concatenate(rows_u), np.vstack(rows_x),
                np.concatenate(rows_y))

    def complete_mask(self) -> np.ndarray:
        return (self.i1 == 1) & (self.i2 == 1)

    def subset(self, mask) -> "AugmentedPanel":
        return AugmentedPanel(self.user_ids[mask], self.group[mask],
                              self.i1[mask], self.x1[mask],
                              self.i2[mask], self.x2[mask])


def augment(rows) -> AugmentedPanel:
    """Build an augmented panel from raw (user_id, group, period, value) rows.

    A row with value None (or NaN) just declares the user; missing
    (user, period) cells become (0, 0). Duplicate (user, period)
    observations and conflicting group labels are rejected.
    """
    users: dict = {}
    for user_id, group, period, value in rows:
        g = _canon_group(group)
        try:
            t = int(period)
        except (TypeError, ValueError):
            raise InputDomainError(f"period must be 1 or 2, got {period!r}")
        if t not in (1, 2):
            raise InputDomainError(f"period must be 1 or 2, got {period!r}")
        rec = users.get(user_id)
        if rec is None:
            rec = users[user_id] = {"group": g, 1: None, 2: None}
        elif rec["group"] != g:
            raise InputDomainError(
                f"user {user_id!r} appears in both groups")
        missing = value is None or (isinstance(value, float) and math.isnan(value))
        if not missing:
            v = float(value)
            if not math.isfinite(v):
                raise InputDomainError(f"non-finite value for user {user_id!r}")
            if rec[t] is not None:
                raise InputDomainError(
                    f"duplicate observation for user {user_id!r} period {t}")
            rec[t] = v

    kept = [(u, r) for u, r in users.items()
            if r[1] is not None or r[2] is not None]
    if not kept:
        raise InputDomainError("no observed values in panel")
    user_ids = np.array([u for u, _ in kept])
    group = np.array([r["group"] for _, r in kept])
    i1 = np.array([0.0 if r[1] is None else 1.0 for _, r in kept])
    x1 = np.array([0.0 if r[1] is None else r[1] for _, r in kept])
    i2 = np.array([0.0 if r[2] is None else 1.0 for _, r in kept])
    x2 = np.array([0.0 if r[2] is None else r[2] for _, r in kept])
    return AugmentedPanel(user_ids, group, i1, x1, i2, x2)


@dataclass(frozen=True)
class GroupMetricVector:
    """Period metrics of one group with their linearized covariance.

    ``means``/``cov_means`` describe the augmented 4-vector
    (I_1, X_1, I_2, X_2): means and the covariance *of the means* (sample
    covariance over users divided by the user count). ``ratios`` are the
    period metrics X_t/I_t and ``cov_ratios`` their 2x2 covariance from
    the first-order expansion.
    """

    n_users: int
    means: np.ndarray
    cov_means: np.ndarray
    ratios: np.ndarray
    cov_ratios: np.ndarray


def metric_cov(panel: AugmentedPanel) -> GroupMetricVector:
    """Linearized covariance of the two period metrics of one group."""
    n = panel.n_users
    if n < 2:
        raise InsufficientDataError("metric covariance requires >= 2 users")
    qm = QuadMoments.from_rows(
        np.column_stack([panel.i1, panel.x1, panel.i2, panel.x2]))
    means = qm.mean
    if means[0] <= 0.0 or means[2] <= 0.0:
        raise DegenerateDataError("a period has no observations")
    cov_means = qm.covariance() / n
    ratios = np.array([means[1] / means[0], means[3] / means[2]])
    # gradient of X_t/I_t in the (I_t, X_t) block
    grads = [np.array([-means[1] / means[0] ** 2, 1.0 / means[0]]),
             np.array([-means[3] / means[2] ** 2, 1.0 / means[2]])]
    blocks = [(0, 2), (2, 4)]
    cov_ratios = np.empty((2, 2))
    for a in range(2):
        for b in range(2):
            sub = cov_means[blocks[a][0]:blocks[a][1], blocks[b][0]:blocks[b][1]]
            cov_ratios[a, b] = grads[a] @ sub @ grads[b]
    cov_ratios = (cov_ratios + cov_ratios.T) / 2.0
    return GroupMetricVector(n_users=n, means=means, cov_means=cov_means,
                             ratios=ratios, cov_ratios=cov_ratios)


@dataclass(frozen=True)
class CrossoverFit:
    """Estimates of (theta1, theta2, delta) with their covariance."""

    theta: np.ndarray
    cov: np.ndarray
    ci: ConfidenceInterval
    method: str

    @property
    def delta(self) -> float:
        return float(self.theta[2])

    @property
    def se_delta(self) -> float:
        return float(math.sqrt(self.cov[2, 2]))


def _delta_ci(delta: float, se: float, alpha: float, method: str) -> ConfidenceInterval:
    h = z_quantile(alpha) * se
    return ConfidenceInterval(point=delta, lower=delta - h, upper=delta + h,
                              alpha=alpha, se=se, method=method)


def fit_crossover(group1: GroupMetricVector, group2: GroupMetricVector,
                  alpha: float = 0.05, effect: str = "additive") -> CrossoverFit:
    """GLS fit of the cross-over model to the four period metrics.

    The metric vector is ordered (group I period 1, group I period 2,
    group II period 1, group II period 2) and its covariance is block
    diagonal in the two groups. With ``effect="relative"`` the treated
    cells are theta_t * (1 + delta) instead of theta_t + delta, solved by
    Gauss-Newton on the same inputs.
    """
    xbar = np.concatenate([group1.ratios, group2.ratios])
    sigma = np.zeros((4, 4))
    sigma[:2, :2] = group1.cov_ratios
    sigma[2:, 2:] = group2.cov_ratios
    try:
        sigma_inv = np.linalg.inv(sigma)
    except np.linalg.LinAlgError:
        raise DegenerateDataError("metric covariance is singular")

    if effect == "additive":
        info = _DESIGN.T @ sigma_inv @ _DESIGN
        try:
            cov = np.linalg.inv(info)
        except np.linalg.LinAlgError:
            raise DegenerateDataError("information matrix is singular")
        theta = cov @ (_DESIGN.T @ sigma_inv @ xbar)
        method = "delta-gls"
    elif effect == "relative":
        theta, cov = _fit_relative(xbar, sigma_inv)
        method = "delta-gls-relative"
    else:
        raise InputDomainError(f"unknown effect model {effect!r}")
    se = math.sqrt(max(0.0, cov[2, 2]))
    return CrossoverFit(theta=theta, cov=cov,
                        ci=_delta_ci(float(theta[2]), se, alpha, method),
                        method=method)


def _fit_relative(xbar: np.ndarray, sigma_inv: np.ndarray,
                  max_iter: int = 100, tol: float = 1e-10) -> tuple:
    """Gauss-Newton for mu(theta) = (t1(1+d), t2, t1, t2(1+d))."""
    t1 = xbar[2] if xbar[2] != 0 else 1.0
    t2 = xbar[1] if xbar[1] != 0 else 1.0
    theta = np.array([t1, t2, xbar[0] / t1 - 1.0])
    for _ in range(max_iter):
        t1, t2, d = theta
        mu = np.array([t1 * (1 + d), t2, t1, t2 * (1 + d)])
        jac = np.array([[1 + d, 0.0, t1],
                        [0.0, 1.0, 0.0],
                        [1.0, 0.0, 0.0],
                        [0.0, 1 + d, t2]])
        info = jac.T @ sigma_inv @ jac
        try:
            step = np.linalg.solve(info, jac.T @ sigma_inv @ (xbar - mu))
        except np.linalg.LinAlgError:
            raise DegenerateDataError("information matrix is singular")
        theta = theta + step
        if float(np.abs(step).max()) < tol:
            break
    t1, t2, d = theta
    jac = np.array([[1 + d, 0.0, t1],
                    [0.0, 1.0, 0.0],
                    [1.0, 0.0, 0.0],
                    [0.0, 1 + d, t2]])
    cov = np.linalg.inv(jac.T @ sigma_inv @ jac)
    return theta, cov


def fit_crossover_delta(panel: AugmentedPanel, alpha: float = 0.05,
                        effect: str = "additive") -> CrossoverFit:
    """Convenience wrapper: per-group covariances from one panel, then GLS."""
    return fit_crossover(metric_cov(panel.for_group("I")),
                         metric_cov(panel.for_group("II")),
                         alpha=alpha, effect=effect)


def fit_crossover_lmm(panel: AugmentedPanel, alpha: float = 0.05) -> CrossoverFit:
    """Mixed-model baseline: response ~ treated + period with a user intercept.

    Only observed rows enter the fit. The treatment coefficient plays the
    role of delta; (theta1, theta2) are the fitted period baselines.
    """
    user_ids, design, y = panel.long_format()
    fit = lmm.fit_random_intercept(user_ids, design, y)
    # (intercept, treated, period2) -> (theta1, theta2, delta)
    t = np.array([[1.0, 0.0, 0.0],
                  [1.0, 0.0, 1.0],
                  [0.0, 1.0, 0.0]])
    theta = t @ fit.beta
    cov = t @ fit.cov_beta @ t.T
    se = math.sqrt(max(0.0, cov[2, 2]))
    return CrossoverFit(theta=theta, cov=cov,
                        ci=_delta_ci(float(theta[2]), se, alpha, "lmm"),
                        method="lmm")


@dataclass(frozen=True)
class DecompositionReport:
    """Per-subgroup effect estimates and their precision-weighted average."""

    complete_delta: float
    complete_var: float
    incomplete_delta: float
    incomplete_var: float
    weighted_delta: float
    weighted_var: float
    n_complete: int
    n_incomplete: int

    def ci(self, alpha: float = 0.05) -> ConfidenceInterval:
        se = math.sqrt(self.weighted_var)
        return _delta_ci(self.weighted_delta, se, alpha, "decompose")


def decompose_complete_incomplete(panel: AugmentedPanel) -> DecompositionReport:
    """Split users by completeness and recombine the two effect estimates.

    Complete users (both periods observed) get the mixed-model fit;
    incomplete users appear once each, so their rows form a plain linear
    model. The combination weights are inverse variances, which is the
    implicit weighting a joint mixed model applies when it assumes one
    common effect for both subgroups.
    """
    complete = panel.subset(panel.complete_mask())
    incomplete = panel.subset(~panel.complete_mask())
    if complete.n_users == 0 or incomplete.n_users == 0:
        raise InsufficientDataError(
            "both complete and incomplete subgroups must be nonempty")

    fit_c = fit_crossover_lmm(complete)
    delta_c, var_c = fit_c.delta, float(fit_c.cov[2, 2])

    _, design, y = incomplete.long_format()
    if design.shape[0] <= design.shape[1]:
        raise InsufficientDataError("too few incomplete observations")
    beta, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        raise DegenerateDataError("incomplete-group design is rank deficient")
    resid = y - design @ beta
    dof = design.shape[0] - design.shape[1]
    sigma2 = float(resid @ resid) / dof
    cov_beta = sigma2 * np.linalg.inv(design.T @ design)
    delta_i, var_i = float(beta[1]), float(cov_beta[1, 1])

    w_c, w_i = 1.0 / var_c, 1.0 / var_i
    weighted = (w_c * delta_c + w_i * delta_i) / (w_c + w_i)
    return DecompositionReport(
        complete_delta=delta_c, complete_var=var_c,
        incomplete_delta=delta_i, incomplete_var=var_i,
        weighted_delta=weighted, weighted_var=1.0 / (w_c + w_i),
        n_complete=complete.n_users, n_incomplete=incomplete.n_users)
