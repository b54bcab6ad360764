"""Least-squares engine: univariate and polynomial OLS, two-way FE panels.

All fits go through a thin QR solve; the explicit normal-equation inverse
is never formed from ``X'X``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from math import comb
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import linalg, stats

from .errors import DegenerateDesignError, DomainError

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10
MAX_DEGREE = 8


@dataclass(frozen=True)
class RegressionFit:
    coefficients: np.ndarray
    std_errors: np.ndarray
    r_squared: float
    n_obs: int
    residuals: np.ndarray
    cov_type: str = "classical"
    cov: Optional[np.ndarray] = None
    names: Tuple[str, ...] = ()
    df_resid: int = 0
    n_dropped: int = 0
    cluster_by: Optional[str] = None
    n_clusters: Optional[int] = None

    @property
    def slope(self) -> float:
        return float(self.coefficients[1])

    @property
    def intercept(self) -> float:
        return float(self.coefficients[0])

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no coefficient named {name!r}; have {self.names}") from None

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.index(name)])

    def se(self, name: str) -> float:
        return float(self.std_errors[self.index(name)])

    @property
    def df_inference(self) -> int:
        """Degrees of freedom for t critical values (clusters minus one when clustered)."""
        if self.cov_type == "cluster" and self.n_clusters:
            return self.n_clusters - 1
        return max(self.df_resid, 1)

    def conf_int(self, name: str, level: float = 0.90) -> Tuple[float, float]:
        b, s = self.coef(name), self.se(name)
        t = stats.t.ppf(0.5 + level / 2.0, self.df_inference)
        return b - t * s, b + t * s


@dataclass(frozen=True)
class PanelSpec:
    dependent: str
    regressors: Sequence[str] = ()
    lagged_dependent: bool = False
    unit_effects: bool = True
    time_effects: bool = True
    cluster_by: Optional[str] = "country"
    unit_key: str = "country"
    time_key: str = "year"

    def __post_init__(self):
        object.__setattr__(self, "regressors", tuple(self.regressors))
        if not self.regressors and not self.lagged_dependent:
            raise DomainError("a panel specification needs regressors or a lagged dependent variable")

    @property
    def lag_name(self) -> str:
        return f"{self.dependent}_lag"


def _solve(X: np.ndarray, y: np.ndarray, names: Sequence[str]):
    """QR least squares. Returns coefficients, residuals and ``R^{-1}``."""
    Q, R = np.linalg.qr(X, mode="reduced")
    diag = np.abs(np.diag(R))
    scale = diag.max() if diag.size else 0.0
    bad = np.flatnonzero(diag <= RANK_TOL * max(scale, 1e-300))
    if bad.size:
        raise DegenerateDesignError(f"design is rank deficient at column {names[bad[0]]!r}")
    beta = linalg.solve_triangular(R, Q.T @ y)
    Rinv = linalg.solve_triangular(R, np.eye(R.shape[0]))
    return beta, y - X @ beta, Rinv


def _r_squared(y: np.ndarray, resid: np.ndarray) -> float:
    yc = y - y.mean()
    sst = float(yc @ yc)
    if sst == 0.0:
        return 0.0
    return float(min(max(1.0 - (resid @ resid) / sst, 0.0), 1.0))


def _classical(resid, Rinv, df):
    sigma2 = float(resid @ resid) / df if df > 0 else np.nan
    return sigma2 * (Rinv @ Rinv.T)


def cluster_covariance(X, resid, groups, Rinv=None) -> Tuple[np.ndarray, int]:
    """Cluster-robust sandwich with the ``G/(G-1) (N-1)/(N-K)`` correction."""
    n, k = X.shape
    codes, uniq = pd.factorize(np.asarray(groups), sort=True)
    g = len(uniq)
    if g < 2:
        raise DegenerateDesignError(f"clustered covariance needs at least 2 clusters, got {g}")
    if Rinv is None:
        _, R = np.linalg.qr(X, mode="reduced")
        Rinv = linalg.solve_triangular(R, np.eye(k))
    bread = Rinv @ Rinv.T
    scores = np.zeros((g, k))
    np.add.at(scores, codes, X * resid[:, None])
    meat = scores.T @ scores
    c = g / (g - 1) * (n - 1) / (n - k)
    V = c * bread @ meat @ bread
    return 0.5 * (V + V.T), g


def ols(y, x, cov_type: str = "classical", groups=None) -> RegressionFit:
    """Intercept-and-slope least squares of ``y`` on ``x``.

    A constant ``y`` yields slope 0 and R^2 0 by convention.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.shape != x.shape or y.ndim != 1:
        raise DomainError(f"y and x must be 1-D of equal length, got {y.shape} and {x.shape}")
    n = y.size
    if n < 3:
        raise DomainError(f"need at least 3 observations, got {n}")
    names = ("const", "x")
    if np.ptp(y) == 0.0:
        zeros = np.zeros(2)
        return RegressionFit(np.array([y[0], 0.0]), zeros, 0.0, n, np.zeros(n), cov_type,
                             np.zeros((2, 2)), names, n - 2)
    if np.ptp(x) == 0.0:
        raise DegenerateDesignError("regressor 'x' has zero variance")
    X = np.column_stack([np.ones(n), x])
    beta, resid, Rinv = _solve(X, y, names)
    return _finish(X, y, beta, resid, Rinv, names, cov_type, groups)


def _finish(X, y, beta, resid, Rinv, names, cov_type, groups, df_extra=0, n_dropped=0, cluster_by=None):
    n, k = X.shape
    df = n - k - df_extra
    n_clusters = None
    if cov_type == "classical":
        cov = _classical(resid, Rinv, df)
    elif cov_type == "cluster":
        if groups is None:
            raise DomainError("cluster covariance requires groups")
        cov, n_clusters = cluster_covariance(X, resid, groups, Rinv)
    else:
        raise DomainError(f"unknown cov_type {cov_type!r}")
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return RegressionFit(beta, se, _r_squared(y, resid), n, resid, cov_type, cov, tuple(names), df,
                         n_dropped, cluster_by, n_clusters)


def poly_ols(y, x, degree: int) -> RegressionFit:
    """Least squares on powers of ``x`` up to ``degree``.

    Powers are built from the standardized regressor for conditioning;
    coefficients and their covariance are mapped back to raw powers of ``x``.
    """
    if not (1 <= degree <= MAX_DEGREE):
        raise DomainError(f"degree must be in [1, {MAX_DEGREE}], got {degree}")
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.shape != x.shape or y.ndim != 1:
        raise DomainError("y and x must be 1-D of equal length")
    n = y.size
    if n <= degree + 1:
        raise DomainError(f"need more than {degree + 1} observations for degree {degree}, got {n}")
    m, s = x.mean(), x.std()
    if s == 0.0:
        raise DegenerateDesignError("regressor 'x' has zero variance")
    names = ("const",) + tuple(f"x^{j}" for j in range(1, degree + 1))
    Z = np.vander((x - m) / s, degree + 1, increasing=True)
    beta_z, resid, Rinv = _solve(Z, y, names)
    T = np.zeros((degree + 1, degree + 1))
    for j in range(degree + 1):
        for k in range(j + 1):
            T[k, j] = comb(j, k) * (-m) ** (j - k) / s**j
    df = n - degree - 1
    cov = T @ _classical(resid, Rinv, df) @ T.T
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return RegressionFit(T @ beta_z, se, _r_squared(y, resid), n, resid, "classical", cov, names, df)


def r_squared_identity_check(fit: RegressionFit, var_x: float, var_y: float) -> float:
    """``beta^2 var(x) / var(y)``, which equals R^2 for a univariate fit."""
    if var_y == 0:
        return 0.0
    return fit.slope**2 * var_x / var_y


def standardize(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise DomainError("standardize needs at least 2 values")
    sd = v.std(ddof=1)
    if not sd > 0:
        raise DomainError("standardize needs positive variance")
    return (v - v.mean()) / sd


def _add_lag(df: pd.DataFrame, spec: PanelSpec) -> pd.DataFrame:
    times = np.sort(df[spec.time_key].unique())
    step = int(np.min(np.diff(times))) if times.size > 1 else 1
    prev = df[[spec.unit_key, spec.time_key, spec.dependent]].copy()
    prev[spec.time_key] = prev[spec.time_key] + step
    prev = prev.rename(columns={spec.dependent: spec.lag_name})
    return df.merge(prev, on=[spec.unit_key, spec.time_key], how="left")


def panel_fe(data: pd.DataFrame, spec: PanelSpec, cov_type: Optional[str] = None) -> RegressionFit:
    """Fixed-effects least squares on a long table.

    Unit effects are absorbed by the within transformation, time effects
    enter as period indicators. Rows missing any used variable are dropped.
    Coefficient order: lagged dependent, regressors, [const], time dummies.
    """
    df = data
    if spec.lagged_dependent and spec.lag_name not in df.columns:
        df = _add_lag(df, spec)
    slope_cols = ([spec.lag_name] if spec.lagged_dependent else []) + list(spec.regressors)
    missing = [c for c in [spec.dependent, spec.unit_key, spec.time_key, *slope_cols] if c not in df.columns]
    if missing:
        raise DomainError(f"panel table lacks columns {missing}")
    if cov_type is None:
        cov_type = "cluster" if spec.cluster_by else "classical"
    used = [spec.dependent, *slope_cols]
    keep = df[used].notna().all(axis=1).to_numpy()
    n_dropped = int((~keep).sum())
    df = df.loc[keep]
    if n_dropped:
        logger.info("panel_fe: dropped %d incomplete rows", n_dropped)
    if len(df) == 0:
        raise DegenerateDesignError("no complete observations")

    y = df[spec.dependent].to_numpy(float)
    X = df[slope_cols].to_numpy(float)
    names = list(slope_cols)
    if not spec.unit_effects:
        X = np.column_stack([X, np.ones(len(df))])
        names.append("const")
    if spec.time_effects:
        periods = np.sort(df[spec.time_key].unique())
        t = df[spec.time_key].to_numpy()
        dummies = np.column_stack([(t == p).astype(float) for p in periods[1:]]) if periods.size > 1 else np.empty((len(df), 0))
        X = np.column_stack([X, dummies])
        names.extend(f"t{p}" for p in periods[1:])

    n_units = 0
    if spec.unit_effects:
        codes, uniq = pd.factorize(df[spec.unit_key], sort=True)
        n_units = len(uniq)
        counts = np.bincount(codes).astype(float)

        def demean(a):
            a2 = np.atleast_2d(a.T).T if a.ndim == 1 else a
            sums = np.zeros((n_units, a2.shape[1]))
            np.add.at(sums, codes, a2)
            out = a2 - (sums / counts[:, None])[codes]
            return out[:, 0] if a.ndim == 1 else out

        raw_norm = np.linalg.norm(X[:, : len(slope_cols)], axis=0)
        y = demean(y)
        X = demean(X)
        within = np.linalg.norm(X[:, : len(slope_cols)], axis=0)
        for name, r, w in zip(slope_cols, raw_norm, within):
            if w <= 1e-12 * max(r, 1e-300):
                raise DegenerateDesignError(f"regressor {name!r} has no within-unit variation")

    # drop time indicators made redundant by the sample; user regressors must survive
    n_user = len(slope_cols) + (0 if spec.unit_effects else 1)
    while True:
        _, R = np.linalg.qr(X, mode="reduced")
        diag = np.abs(np.diag(R))
        bad = np.flatnonzero(diag <= RANK_TOL * max(diag.max(), 1e-300))
        if not bad.size:
            break
        j = bad[0]
        if j < n_user:
            raise DegenerateDesignError(f"regressor {names[j]!r} is collinear with the fixed effects")
        X = np.delete(X, j, axis=1)
        del names[j]

    beta, resid, Rinv = _solve(X, y, names)
    groups = df[spec.cluster_by].to_numpy() if cov_type == "cluster" else None
    if cov_type == "cluster" and spec.cluster_by is None:
        raise DomainError("cluster covariance requested without a cluster key")
    return _finish(X, y, beta, resid, Rinv, names, cov_type, groups, df_extra=n_units,
                   n_dropped=n_dropped, cluster_by=spec.cluster_by if cov_type == "cluster" else None)
