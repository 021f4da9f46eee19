"""Mergeable moment accumulators.

Every estimator in this package runs on low-dimensional summary statistics
that can be computed in a single pass and combined across shards, so the
expensive part of any analysis is one distributed scan of the raw data.

Accumulators store raw power sums of *shifted* observations: each
accumulator subtracts the first value it sees before summing. Raw power
sums of unshifted data suffer catastrophic cancellation when the mean is
large relative to the spread (e.g. sum of x^3 for x ~ N(1e6, 1)); shifting
by a value near the data keeps the sums small without giving up the
componentwise-add merge. Merging accumulators with different shifts
re-bases one of them first, which is exact polynomial algebra.

Accumulators are value-semantic and frozen: ``accumulate`` and ``merge``
return new instances, so sharing across threads is safe by construction.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputDomainError, InsufficientDataError

__all__ = ["UniMoments", "PairedMoments", "PairedStats", "QuadMoments"]


def _check_finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise InputDomainError(f"non-finite observation: {v!r}")


@dataclass(frozen=True)
class UniMoments:
    """Count and power sums (up to cubes) of a univariate sample."""

    n: int = 0
    shift: float = 0.0
    s1: float = 0.0
    s2: float = 0.0
    s3: float = 0.0

    @classmethod
    def from_array(cls, x) -> "UniMoments":
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            return cls()
        if not np.all(np.isfinite(x)):
            raise InputDomainError("non-finite observation in sample")
        c = float(x.flat[0])
        u = x - c
        u2 = u * u
        return cls(n=int(x.size), shift=c, s1=float(u.sum()),
                   s2=float(u2.sum()), s3=float((u2 * u).sum()))

    def accumulate(self, x: float) -> "UniMoments":
        x = float(x)
        _check_finite(x)
        if self.n == 0:
            return UniMoments(n=1, shift=x)
        u = x - self.shift
        return UniMoments(n=self.n + 1, shift=self.shift, s1=self.s1 + u,
                          s2=self.s2 + u * u, s3=self.s3 + u * u * u)

    def _rebased(self, shift: float) -> "UniMoments":
        d = self.shift - shift
        if d == 0.0 or self.n == 0:
            return dataclasses.replace(self, shift=shift)
        n, s1, s2, s3 = self.n, self.s1, self.s2, self.s3
        return UniMoments(
            n=n, shift=shift,
            s1=s1 + n * d,
            s2=s2 + 2 * d * s1 + n * d * d,
            s3=s3 + 3 * d * s2 + 3 * d * d * s1 + n * d ** 3,
        )

    def merge(self, other: "UniMoments") -> "UniMoments":
        if self.n == 0:
            return other
        if other.n == 0:
            return self
        o = other._rebased(self.shift)
        return UniMoments(n=self.n + o.n, shift=self.shift, s1=self.s1 + o.s1,
                          s2=self.s2 + o.s2, s3=self.s3 + o.s3)

    # raw (unshifted) sums, mostly useful for tests and debugging
    @property
    def sum_x(self) -> float:
        return self._rebased(0.0).s1

    @property
    def sum_x2(self) -> float:
        return self._rebased(0.0).s2

    @property
    def sum_x3(self) -> float:
        return self._rebased(0.0).s3

    @property
    def mean(self) -> float:
        if self.n == 0:
            raise InsufficientDataError("mean of empty accumulator")
        return self.shift + self.s1 / self.n

    @property
    def variance(self) -> float:
        """Unbiased sample variance (n-1 divisor)."""
        if self.n < 2:
            raise InsufficientDataError("variance requires n >= 2")
        m2 = self.s2 - self.s1 * self.s1 / self.n
        return max(0.0, m2) / (self.n - 1)


@dataclass(frozen=True)
class PairedStats:
    """Derived statistics of a paired sample.

    ``var_*`` and ``cov_xy`` are unbiased (n-1 divisor); the central
    moments ``m*`` use the 1/n divisor, which is what plug-in skewness
    formulas expect.
    """

    n: int
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
    m21: float  # central E[(x-mx)^2 (y-my)]
    m12: float  # central E[(x-mx) (y-my)^2]


@dataclass(frozen=True)
class PairedMoments:
    """Count and power sums (through third order) of a paired sample.

    Field names encode powers: ``s21`` is the sum of (x-shift_x)^2 * (y-shift_y).
    """

    n: int = 0
    shift_x: float = 0.0
    shift_y: float = 0.0
    s10: float = 0.0
    s01: float = 0.0
    s20: float = 0.0
    s02: float = 0.0
    s11: float = 0.0
    s30: float = 0.0
    s03: float = 0.0
    s21: float = 0.0
    s12: float = 0.0

    @classmethod
    def from_arrays(cls, x, y) -> "PairedMoments":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != y.shape or x.ndim != 1:
            raise InputDomainError("x and y must be 1-D arrays of equal length")
        if x.size == 0:
            return cls()
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InputDomainError("non-finite observation in sample")
        cx, cy = float(x[0]), float(y[0])
        u = x - cx
        v = y - cy
        u2, v2 = u * u, v * v
        return cls(
            n=int(x.size), shift_x=cx, shift_y=cy,
            s10=float(u.sum()), s01=float(v.sum()),
            s20=float(u2.sum()), s02=float(v2.sum()), s11=float((u * v).sum()),
            s30=float((u2 * u).sum()), s03=float((v2 * v).sum()),
            s21=float((u2 * v).sum()), s12=float((u * v2).sum()),
        )

    def accumulate(self, x: float, y: float) -> "PairedMoments":
        x, y = float(x), float(y)
        _check_finite(x, y)
        if self.n == 0:
            return PairedMoments(n=1, shift_x=x, shift_y=y)
        u = x - self.shift_x
        v = y - self.shift_y
        return PairedMoments(
            n=self.n + 1, shift_x=self.shift_x, shift_y=self.shift_y,
            s10=self.s10 + u, s01=self.s01 + v,
            s20=self.s20 + u * u, s02=self.s02 + v * v, s11=self.s11 + u * v,
            s30=self.s30 + u ** 3, s03=self.s03 + v ** 3,
            s21=self.s21 + u * u * v, s12=self.s12 + u * v * v,
        )

    def _rebased(self, shift_x: float, shift_y: float) -> "PairedMoments":
        dx = self.shift_x - shift_x
        dy = self.shift_y - shift_y
        if (dx == 0.0 and dy == 0.0) or self.n == 0:
            return dataclasses.replace(self, shift_x=shift_x, shift_y=shift_y)
        n = self.n
        s10, s01 = self.s10, self.s01
        s20, s02, s11 = self.s20, self.s02, self.s11
        return PairedMoments(
            n=n, shift_x=shift_x, shift_y=shift_y,
            s10=s10 + n * dx,
            s01=s01 + n * dy,
            s20=s20 + 2 * dx * s10 + n * dx * dx,
            s02=s02 + 2 * dy * s01 + n * dy * dy,
            s11=s11 + dx * s01 + dy * s10 + n * dx * dy,
            s30=self.s30 + 3 * dx * s20 + 3 * dx * dx * s10 + n * dx ** 3,
            s03=self.s03 + 3 * dy * s02 + 3 * dy * dy * s01 + n * dy ** 3,
            s21=(self.s21 + 2 * dx * s11 + dx * dx * s01
                 + dy * s20 + 2 * dx * dy * s10 + n * dx * dx * dy),
            s12=(self.s12 + 2 * dy * s11 + dy * dy * s10
                 + dx * s02 + 2 * dx * dy * s01 + n * dx * dy * dy),
        )

    def merge(self, other: "PairedMoments") -> "PairedMoments":
        if self.n == 0:
            return other
        if other.n == 0:
            return self
        o = other._rebased(self.shift_x, self.shift_y)
        return PairedMoments(
            n=self.n + o.n, shift_x=self.shift_x, shift_y=self.shift_y,
            s10=self.s10 + o.s10, s01=self.s01 + o.s01,
            s20=self.s20 + o.s20, s02=self.s02 + o.s02, s11=self.s11 + o.s11,
            s30=self.s30 + o.s30, s03=self.s03 + o.s03,
            s21=self.s21 + o.s21, s12=self.s12 + o.s12,
        )

    def raw_sums(self) -> tuple:
        """Unshifted sums (x, y, x2, y2, xy, x3, y3, x2y, xy2)."""
        z = self._rebased(0.0, 0.0)
        return (z.s10, z.s01, z.s20, z.s02, z.s11, z.s30, z.s03, z.s21, z.s12)

    def derive_stats(self) -> PairedStats:
        """Means, unbiased (co)variances and central third moments."""
        n = self.n
        if n < 2:
            raise InsufficientDataError("derive_stats requires n >= 2")
        ub = self.s10 / n
        vb = self.s01 / n
        S20 = self.s20 - n * ub * ub
        S02 = self.s02 - n * vb * vb
        S11 = self.s11 - n * ub * vb
        S30 = self.s30 - 3 * ub * self.s20 + 2 * n * ub ** 3
        S03 = self.s03 - 3 * vb * self.s02 + 2 * n * vb ** 3
        S21 = self.s21 - vb * self.s20 - 2 * ub * self.s11 + 2 * n * ub * ub * vb
        S12 = self.s12 - ub * self.s02 - 2 * vb * self.s11 + 2 * n * vb * vb * ub
        return PairedStats(
            n=n,
            mean_x=self.shift_x + ub, mean_y=self.shift_y + vb,
            var_x=max(0.0, S20) / (n - 1), var_y=max(0.0, S02) / (n - 1),
            cov_xy=S11 / (n - 1),
            m2x=max(0.0, S20) / n, m2y=max(0.0, S02) / n, m11=S11 / n,
            m3x=S30 / n, m3y=S03 / n, m21=S21 / n, m12=S12 / n,
        )


@dataclass(frozen=True)
class QuadMoments:
    """First- and second-order sums of a 4-vector sample.

    Holds the inputs for the covariance of four period metrics; arrays are
    owned by the instance and must not be mutated by callers.
    """

    n: int = 0
    shift: np.ndarray = dataclasses.field(default_factory=lambda: np.zeros(4))
    s1: np.ndarray = dataclasses.field(default_factory=lambda: np.zeros(4))
    s2: np.ndarray = dataclasses.field(default_factory=lambda: np.zeros((4, 4)))

    @classmethod
    def from_rows(cls, rows) -> "QuadMoments":
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != 4:
            raise InputDomainError("expected an (n, 4) array of rows")
        if rows.shape[0] == 0:
            return cls()
        if not np.all(np.isfinite(rows)):
            raise InputDomainError("non-finite observation in sample")
        c = rows[0].copy()
        u = rows - c
        return cls(n=rows.shape[0], shift=c, s1=u.sum(axis=0), s2=u.T @ u)

    def accumulate(self, row) -> "QuadMoments":
        row = np.asarray(row, dtype=float)
        if row.shape != (4,):
            raise InputDomainError("expected a length-4 row")
        if not np.all(np.isfinite(row)):
            raise InputDomainError("non-finite observation")
        if self.n == 0:
            return QuadMoments(n=1, shift=row.copy(), s1=np.zeros(4),
                               s2=np.zeros((4, 4)))
        u = row - self.shift
        return QuadMoments(n=self.n + 1, shift=self.shift,
                           s1=self.s1 + u, s2=self.s2 + np.outer(u, u))

    def _rebased(self, shift: np.ndarray) -> "QuadMoments":
        d = self.shift - shift
        if self.n == 0 or not d.any():
            return QuadMoments(n=self.n, shift=shift.copy(), s1=self.s1, s2=self.s2)
        s1 = self.s1 + self.n * d
        s2 = (self.s2 + np.outer(d, self.s1) + np.outer(self.s1, d)
              + self.n * np.outer(d, d))
        return QuadMoments(n=self.n, shift=shift.copy(), s1=s1, s2=s2)

    def merge(self, other: "QuadMoments") -> "QuadMoments":
        if self.n == 0:
            return other
        if other.n == 0:
            return self
        o = other._rebased(self.shift)
        return QuadMoments(n=self.n + o.n, shift=self.shift,
                           s1=self.s1 + o.s1, s2=self.s2 + o.s2)

    @property
    def mean(self) -> np.ndarray:
        if self.n == 0:
            raise InsufficientDataError("mean of empty accumulator")
        return self.shift + self.s1 / self.n

    def covariance(self) -> np.ndarray:
        """Unbiased 4x4 sample covariance (n-1 divisor), symmetrized."""
        if self.n < 2:
            raise InsufficientDataError("covariance requires n >= 2")
        m = self.s1 / self.n
        cov = (self.s2 - self.n * np.outer(m, m)) / (self.n - 1)
        return (cov + cov.T) / 2.0
