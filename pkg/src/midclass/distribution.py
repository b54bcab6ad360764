"""Percentile income distributions and the share operations defined on them.

Shares are held on a fixed-point grid of ``2**-53``. Every partial sum of
such values is representable exactly as a double, so interval shares are
exactly additive and the Lorenz curve ends at exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, UnsupportedOperationError

N_PERCENTILES = 100
SUM_TOL = 1e-6

_UNIT = 2.0**53


def quantize_shares(shares: np.ndarray) -> np.ndarray:
    """Snap shares (1-D or rows of a 2-D array) to the 2**-53 grid summing to 1.

    Rounding residue is absorbed by the largest share of each row. Already
    quantized input is returned bit-identical.
    """
    s = np.asarray(shares, dtype=float)
    one_d = s.ndim == 1
    s = np.atleast_2d(s)
    ticks = np.rint(s * _UNIT).astype(np.int64)
    residual = np.int64(_UNIT) - ticks.sum(axis=1)
    rows = np.arange(ticks.shape[0])
    ticks[rows, ticks.argmax(axis=1)] += residual
    out = ticks / _UNIT
    return out[0] if one_d else out


def cumulative_shares(shares: np.ndarray) -> np.ndarray:
    """Lorenz ordinates (rows of length 101) for quantized share rows."""
    s = np.atleast_2d(np.asarray(shares, dtype=float))
    ticks = np.rint(s * _UNIT).astype(np.int64)
    cum = np.zeros((s.shape[0], s.shape[1] + 1), dtype=np.int64)
    np.cumsum(ticks, axis=1, out=cum[:, 1:])
    return cum / _UNIT


@dataclass(frozen=True)
class QuantileInterval:
    """Percentile interval ``(p, q]`` in integer percentiles."""

    p: int
    q: int

    def __post_init__(self):
        if int(self.p) != self.p or int(self.q) != self.q:
            raise DomainError(f"interval bounds must be integers, got ({self.p}, {self.q})")
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "q", int(self.q))
        if not (0 <= self.p < self.q <= N_PERCENTILES):
            raise DomainError(f"invalid interval ({self.p}, {self.q}): need 0 <= p < q <= 100")

    @property
    def size(self) -> int:
        return self.q - self.p

    def __str__(self):
        return f"({self.p},{self.q})"

    @classmethod
    def parse(cls, text: str) -> "QuantileInterval":
        p, q = text.strip().strip("()").split(",")
        return cls(int(p), int(q))


@dataclass(frozen=True)
class ClassDecomposition:
    poor_share: float
    middle_share: float
    rich_share: float

    def as_tuple(self):
        return (self.poor_share, self.middle_share, self.rich_share)


@dataclass(frozen=True, eq=False)
class PercentileDistribution:
    """One country-year: 100 percentile shares, poorest first.

    ``shares`` must already sum to 1 within ``SUM_TOL``; they are snapped to
    the exact grid on construction. Use :meth:`from_raw` for raw data that
    may contain negative bottom shares.
    """

    country: str
    year: int
    shares: np.ndarray
    mean_incomes: Optional[np.ndarray] = None
    clamped: bool = False
    _lorenz: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        s = np.asarray(self.shares, dtype=float)
        if s.shape != (N_PERCENTILES,):
            raise DomainError(f"{self.country}/{self.year}: expected 100 shares, got shape {s.shape}")
        if not np.all(np.isfinite(s)) or np.any(s < 0):
            raise DomainError(f"{self.country}/{self.year}: shares must be finite and non-negative")
        total = s.sum()
        if abs(total - 1.0) > SUM_TOL:
            raise DomainError(f"{self.country}/{self.year}: shares sum to {total:.9g}, not 1")
        s = quantize_shares(s)
        s.flags.writeable = False
        object.__setattr__(self, "shares", s)
        object.__setattr__(self, "year", int(self.year))
        if self.mean_incomes is not None:
            m = np.array(self.mean_incomes, dtype=float)
            if m.shape != (N_PERCENTILES,) or not np.all(np.isfinite(m)):
                raise DomainError(f"{self.country}/{self.year}: mean_incomes must be 100 finite values")
            tol = 1e-9 * max(1.0, float(np.abs(m).max()))
            if np.any(np.diff(m) < -tol):
                raise DomainError(f"{self.country}/{self.year}: mean_incomes are not rank ordered")
            m.flags.writeable = False
            object.__setattr__(self, "mean_incomes", m)
        lorenz = cumulative_shares(s)[0]
        lorenz.flags.writeable = False
        object.__setattr__(self, "_lorenz", lorenz)

    @classmethod
    def from_raw(cls, country, year, shares, mean_incomes=None, sum_tol=SUM_TOL):
        """Clamp negative shares to zero and renormalize.

        The raw vector must sum to 1 within ``sum_tol`` before clamping.
        """
        s = np.asarray(shares, dtype=float)
        if s.shape != (N_PERCENTILES,):
            raise DomainError(f"{country}/{year}: expected 100 shares, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise DomainError(f"{country}/{year}: non-finite share")
        total = s.sum()
        if abs(total - 1.0) > sum_tol:
            raise DomainError(f"{country}/{year}: shares sum to {total:.9g}, not 1 (tol {sum_tol})")
        clamped = bool(np.any(s < 0))
        s = np.clip(s, 0.0, None)
        s = s / s.sum()
        return cls(country, year, s, mean_incomes, clamped)

    @classmethod
    def uniform(cls, country="UNI", year=0):
        return cls(country, year, np.full(N_PERCENTILES, 0.01))

    def __eq__(self, other):
        if not isinstance(other, PercentileDistribution):
            return NotImplemented
        if (self.country, self.year, self.clamped) != (other.country, other.year, other.clamped):
            return False
        if not np.array_equal(self.shares, other.shares):
            return False
        if (self.mean_incomes is None) != (other.mean_incomes is None):
            return False
        return self.mean_incomes is None or np.array_equal(self.mean_incomes, other.mean_incomes)

    __hash__ = None

    @property
    def lorenz(self) -> np.ndarray:
        return self._lorenz


def _as_interval(iv) -> QuantileInterval:
    if isinstance(iv, QuantileInterval):
        return iv
    return QuantileInterval(*iv)


def interval_share(dist: PercentileDistribution, iv) -> float:
    """Income share of percentiles ``p+1 .. q``."""
    iv = _as_interval(iv)
    return float(dist.lorenz[iv.q] - dist.lorenz[iv.p])


def lorenz_curve(dist: PercentileDistribution) -> np.ndarray:
    """Cumulative shares at population fractions 0, 0.01, ..., 1."""
    return dist.lorenz.copy()


def class_decomposition(dist: PercentileDistribution, middle) -> ClassDecomposition:
    iv = _as_interval(middle)
    L = dist.lorenz
    return ClassDecomposition(float(L[iv.p]), float(L[iv.q] - L[iv.p]), float(1.0 - L[iv.q]))


def relative_income_interval(dist: PercentileDistribution, lo_frac: float, hi_frac: float) -> QuantileInterval:
    """Percentiles whose mean income lies within ``[lo, hi]`` times the median.

    The median is the mean income of percentile 50.
    """
    if dist.mean_incomes is None:
        raise UnsupportedOperationError(f"{dist.country}/{dist.year}: relative-income classes need mean_incomes")
    return _relative_interval(dist.mean_incomes, lo_frac, hi_frac)


def _relative_interval(incomes, lo_frac, hi_frac) -> QuantileInterval:
    if not (0 < lo_frac < hi_frac):
        raise DomainError(f"need 0 < lo_frac < hi_frac, got {lo_frac}, {hi_frac}")
    median = incomes[49]
    inside = np.flatnonzero((incomes >= lo_frac * median) & (incomes <= hi_frac * median))
    if inside.size == 0:
        raise DomainError("no percentile falls inside the relative-income band")
    # percentile k (1-based) is index k-1; the interval (p, q] covers k = p+1..q
    return QuantileInterval(int(inside[0]), int(inside[-1]) + 1)


def relative_income_share_rows(shares: np.ndarray, incomes: np.ndarray, lo_frac, hi_frac) -> np.ndarray:
    """Relative-income class share for each row; NaN where incomes are missing."""
    out = np.full(shares.shape[0], np.nan)
    cum = cumulative_shares(shares)
    for i in range(shares.shape[0]):
        if np.all(np.isfinite(incomes[i])):
            iv = _relative_interval(incomes[i], lo_frac, hi_frac)
            out[i] = cum[i, iv.q] - cum[i, iv.p]
    return out
