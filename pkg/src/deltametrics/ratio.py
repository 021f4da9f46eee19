"""Point estimates and confidence intervals for percent change of a mean.

Given control observations X and treatment observations Y, all methods
target the relative difference (mean(Y) - mean(X)) / mean(X). Five
interval constructions are provided: the first-order delta method, the
delta method with second-order bias correction, Fieller's quadratic
inversion, and an Edgeworth (skewness-corrected) refinement with and
without the same bias correction.

All methods consume :class:`~deltametrics.moments.PairedMoments`, so they
run on summary statistics computable in one distributed pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.optimize import brentq

from ._dist import t_quantile, z_quantile
from .errors import (
    DegenerateDataError,
    FiellerDegenerateError,
    InputDomainError,
    InsufficientDataError,
)
from .moments import PairedMoments

__all__ = ["ConfidenceInterval", "RatioInput", "delta_ci", "fieller_ci",
           "edgeworth_ci"]

_SQRT2 = math.sqrt(2.0)


def _phi(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


@dataclass(frozen=True)
class ConfidenceInterval:
    """A point estimate with error bars.

    ``se`` is the standard error implied by the method where one exists
    (None for Fieller, whose interval is not symmetric around the point).
    """

    point: float
    lower: float
    upper: float
    alpha: float
    method: str
    se: float | None = None
    warnings: tuple = ()

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class RatioInput:
    """Summary statistics of the two samples plus the target tail mass.

    ``cov_xy`` is the sample covariance of the pairing. A/B groups drawn
    independently from a super-population have zero true covariance;
    :meth:`from_independent` encodes that by zeroing the cross moments.
    """

    n_x: int
    n_y: int
    mean_x: float
    mean_y: float
    var_x: float
    var_y: float
    cov_xy: float
    m2x: float
    m2y: float
    m11: float
    m3x: float
    m3y: float
    m21: float
    m12: float
    alpha: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InputDomainError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.n_x < 2 or self.n_y < 2:
            raise InsufficientDataError("ratio methods require n >= 2 per group")

    @classmethod
    def from_moments(cls, pm: PairedMoments, alpha: float = 0.05) -> "RatioInput":
        s = pm.derive_stats()
        return cls(n_x=s.n, n_y=s.n, mean_x=s.mean_x, mean_y=s.mean_y,
                   var_x=s.var_x, var_y=s.var_y, cov_xy=s.cov_xy,
                   m2x=s.m2x, m2y=s.m2y, m11=s.m11,
                   m3x=s.m3x, m3y=s.m3y, m21=s.m21, m12=s.m12, alpha=alpha)

    @classmethod
    def from_paired(cls, x, y, alpha: float = 0.05) -> "RatioInput":
        return cls.from_moments(PairedMoments.from_arrays(x, y), alpha=alpha)

    @classmethod
    def from_independent(cls, x, y, alpha: float = 0.05) -> "RatioInput":
        """Two independent groups, possibly of different sizes (cov set to 0)."""
        sx = PairedMoments.from_arrays(x, x).derive_stats()
        sy = PairedMoments.from_arrays(y, y).derive_stats()
        return cls(n_x=sx.n, n_y=sy.n, mean_x=sx.mean_x, mean_y=sy.mean_y,
                   var_x=sx.var_x, var_y=sy.var_y, cov_xy=0.0,
                   m2x=sx.m2x, m2y=sy.m2y, m11=0.0,
                   m3x=sx.m3x, m3y=sy.m3y, m21=0.0, m12=0.0, alpha=alpha)

    # variances of the two means and their covariance
    @property
    def vx(self) -> float:
        return self.var_x / self.n_x

    @property
    def vy(self) -> float:
        return self.var_y / self.n_y

    @property
    def vxy(self) -> float:
        # only meaningful for paired samples, where n_x == n_y
        return self.cov_xy / self.n_x

    def _check_denominator(self) -> None:
        if self.mean_x == 0.0:
            raise DegenerateDataError("control mean is zero: percent change undefined")


def _point_and_se(inp: RatioInput, bias_correct: bool) -> tuple:
    """Plug-in point (optionally bias-corrected) and delta-method SE."""
    xb, yb = inp.mean_x, inp.mean_y
    ratio = yb / xb
    var_point = (inp.vy / xb ** 2
                 - 2.0 * yb / xb ** 3 * inp.vxy
                 + yb ** 2 / xb ** 4 * inp.vx)
    se = math.sqrt(max(0.0, var_point))
    point = ratio - 1.0
    if bias_correct:
        point += yb / xb ** 3 * inp.vx - inp.vxy / xb ** 2
    return point, se


def delta_ci(inp: RatioInput, bias_correct: bool = False) -> ConfidenceInterval:
    """First-order normal interval for the percent change.

    The half-width is z_{1-alpha/2} times the delta-method standard error
    of mean(Y)/mean(X); ``bias_correct`` adds the second-order correction
    term mean(Y) var(mean(X)) / mean(X)^3 - cov(means) / mean(X)^2 to the
    point estimate.
    """
    inp._check_denominator()
    point, se = _point_and_se(inp, bias_correct)
    h = z_quantile(inp.alpha) * se
    return ConfidenceInterval(point=point, lower=point - h, upper=point + h,
                              alpha=inp.alpha, se=se,
                              method="delta-bc" if bias_correct else "delta")


def fieller_ci(inp: RatioInput) -> ConfidenceInterval:
    """Fieller interval for the percent change.

    Inverts the quadratic (mean(Y) - rho*mean(X))^2 <= t^2 * var-hat of
    that contrast in rho, then shifts by -1. Requires g < 1, where
    g = t^2 var(mean(X)) / mean(X)^2; for g >= 1 the solution set is not a
    bounded interval and the method is refused.
    """
    inp._check_denominator()
    r = min(inp.n_x, inp.n_y) - 1
    t = t_quantile(inp.alpha, r)
    xb, yb = inp.mean_x, inp.mean_y
    g = t * t * inp.vx / (xb * xb)
    if g >= 1.0:
        raise FiellerDegenerateError(
            f"Fieller g = {g:.4g} >= 1: interval is unbounded (control mean "
            "indistinguishable from zero at this confidence level)")
    a = xb * xb - t * t * inp.vx
    b = xb * yb - t * t * inp.vxy
    c = yb * yb - t * t * inp.vy
    disc = max(0.0, b * b - a * c)
    root = math.sqrt(disc)
    lower = (b - root) / a - 1.0
    upper = (b + root) / a - 1.0
    point = yb / xb - 1.0
    return ConfidenceInterval(point=point, lower=lower, upper=upper,
                              alpha=inp.alpha, se=None, method="fieller")


def _w_skewness(inp: RatioInput) -> float:
    """Sample skewness of W_i = Y_i/mean(X) - mean(Y)*X_i/mean(X)^2.

    W is the linearization of the ratio around the plug-in means; its
    central moments are linear combinations of the paired central moments.
    """
    xb, yb = inp.mean_x, inp.mean_y
    a = -yb / xb ** 2
    b = 1.0 / xb
    m2 = a * a * inp.m2x + 2.0 * a * b * inp.m11 + b * b * inp.m2y
    m3 = (a ** 3 * inp.m3x + 3.0 * a * a * b * inp.m21
          + 3.0 * a * b * b * inp.m12 + b ** 3 * inp.m3y)
    if m2 <= 0.0:
        return 0.0
    return m3 / m2 ** 1.5


def _edgeworth_cdf(t: float, kappa: float, n: int) -> float:
    return _norm_cdf(t) - kappa * (t * t - 1.0) * _phi(t) / (6.0 * math.sqrt(n))


def edgeworth_quantiles(kappa: float, n: int, alpha: float) -> tuple:
    """Quantiles (lo, hi) of the skewness-corrected cdf, plus a fallback flag.

    Solves F(t) = alpha/2 and 1 - alpha/2 by bracketed root finding on
    [-10, 10] to 1e-10; if the correction is so large that a target is not
    bracketed, falls back to the normal quantiles.
    """
    z = z_quantile(alpha)
    if kappa == 0.0:
        return -z, z, False
    lo_t, hi_t = -10.0, 10.0
    f_lo, f_hi = _edgeworth_cdf(lo_t, kappa, n), _edgeworth_cdf(hi_t, kappa, n)
    qs = []
    for target in (alpha / 2.0, 1.0 - alpha / 2.0):
        if not (f_lo < target < f_hi):
            return -z, z, True
        qs.append(brentq(lambda u: _edgeworth_cdf(u, kappa, n) - target,
                         lo_t, hi_t, xtol=1e-10))
    return qs[0], qs[1], False


def edgeworth_ci(inp: RatioInput, bias_correct: bool = False) -> ConfidenceInterval:
    """Edgeworth-corrected interval for the percent change.

    Replaces the +-z quantiles of :func:`delta_ci` with quantiles of
    F(t) = Phi(t) - kappa (t^2 - 1) phi(t) / (6 sqrt(n)), where kappa is
    the sample skewness of the linearized observations: the interval is
    [point + nu_lo * se, point + nu_hi * se].
    """
    inp._check_denominator()
    if inp.n_x != inp.n_y:
        raise InputDomainError("edgeworth_ci requires equal-size groups")
    n = inp.n_x
    if n < 3:
        raise InsufficientDataError("edgeworth_ci requires n >= 3 for skewness")
    point, se = _point_and_se(inp, bias_correct)
    kappa = _w_skewness(inp)
    nu_lo, nu_hi, fell_back = edgeworth_quantiles(kappa, n, inp.alpha)
    warn = ("edgeworth-bracket-fallback",) if fell_back else ()
    return ConfidenceInterval(point=point,
                              lower=point + nu_lo * se,
                              upper=point + nu_hi * se,
                              alpha=inp.alpha, se=se,
                              method="edgeworth-bc" if bias_correct else "edgeworth",
                              warnings=warn)
