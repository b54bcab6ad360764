"""Inequality indices from percentile shares.

Each index has a row-wise form taking an ``(n, 100)`` share matrix and a
scalar form taking a :class:`PercentileDistribution`. Percentiles are
treated as internally homogeneous groups of equal population.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distribution import PercentileDistribution, cumulative_shares
from .errors import DomainError

KINDS = ("gini", "atkinson", "theil", "external")
DEFAULT_EPSILON = 0.5


@dataclass(frozen=True)
class InequalityMeasure:
    """Which index to use as the regressor.

    ``external`` reads the ``gini_ext`` covariate (or a caller-supplied
    vector) instead of computing an index from shares.
    """

    kind: str = "gini"
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown inequality measure {self.kind!r}; choose from {KINDS}")
        if self.kind == "atkinson" and not self.epsilon > 0:
            raise DomainError(f"Atkinson epsilon must be > 0, got {self.epsilon}")

    def __str__(self):
        return f"atkinson({self.epsilon:g})" if self.kind == "atkinson" else self.kind

    def compute(self, shares: np.ndarray) -> np.ndarray:
        if self.kind == "gini":
            return gini_rows(shares)
        if self.kind == "atkinson":
            return atkinson_rows(shares, self.epsilon)
        if self.kind == "theil":
            return theil_rows(shares)
        raise DomainError("the external measure is read from covariates, not computed")


def as_measure(measure) -> InequalityMeasure:
    if isinstance(measure, InequalityMeasure):
        return measure
    return InequalityMeasure(str(measure))


def gini_rows(shares: np.ndarray) -> np.ndarray:
    L = cumulative_shares(shares)
    n = L.shape[1] - 1
    area = (L[:, :-1] + L[:, 1:]).sum(axis=1) / (2.0 * n)
    return 1.0 - 2.0 * area


def atkinson_rows(shares: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    if not epsilon > 0:
        raise DomainError(f"Atkinson epsilon must be > 0, got {epsilon}")
    s = np.atleast_2d(np.asarray(shares, dtype=float))
    x = s * s.shape[1]  # income relative to the mean
    has_zero = np.any(x <= 0, axis=1)
    with np.errstate(divide="ignore"):
        if epsilon == 1.0:
            ede = np.exp(np.mean(np.log(x), axis=1))
        else:
            ede = np.mean(x ** (1.0 - epsilon), axis=1) ** (1.0 / (1.0 - epsilon))
    out = 1.0 - ede
    if epsilon >= 1.0:
        out[has_zero] = 1.0
    return out


def theil_rows(shares: np.ndarray) -> np.ndarray:
    s = np.atleast_2d(np.asarray(shares, dtype=float))
    n = s.shape[1]
    terms = np.zeros_like(s)
    pos = s > 0
    terms[pos] = s[pos] * np.log(n * s[pos])
    return terms.sum(axis=1)


def gini_from_shares(dist: PercentileDistribution) -> float:
    return float(gini_rows(dist.shares[None, :])[0])


def atkinson_from_shares(dist: PercentileDistribution, epsilon: float = DEFAULT_EPSILON) -> float:
    return float(atkinson_rows(dist.shares[None, :], epsilon)[0])


def theil_from_shares(dist: PercentileDistribution) -> float:
    return float(theil_rows(dist.shares[None, :])[0])
