"""Independent reference computations used as test oracles.

Each oracle takes a different route from the production code: pairwise
sums instead of Lorenz areas, quadrature instead of closed forms, dummy
variables instead of within transformations, explicit loops instead of
vectorized sandwiches.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate


def gini_pairwise(shares):
    """Grouped-data Gini as the mean absolute difference between equal-size groups."""
    s = np.asarray(shares, dtype=float)
    n = s.size
    return float(np.abs(s[:, None] - s[None, :]).sum() / (2.0 * n))


def atkinson_direct(shares, eps):
    y = np.asarray(shares, dtype=float) * len(shares)
    mu = y.mean()
    if eps == 1.0:
        if np.any(y == 0):
            return 1.0
        return float(1.0 - np.exp(np.mean(np.log(y))) / mu)
    if eps > 1.0 and np.any(y == 0):
        return 1.0
    ede = np.mean(y ** (1.0 - eps)) ** (1.0 / (1.0 - eps))
    return float(1.0 - ede / mu)


def theil_direct(shares):
    y = np.asarray(shares, dtype=float) * len(shares)
    r = y / y.mean()
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(r > 0, r * np.log(r), 0.0)
    return float(t.mean())


# ---------------------------------------------------------------------------
# zero-inflated Pareto via its quantile function


def pareto_quantile(u, nu, alpha, y_m=1.0):
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = y_m * ((1.0 - nu) / (1.0 - u)) ** (1.0 / alpha)
    return np.where(u > nu, q, 0.0)


def pareto_mean(nu, alpha, y_m=1.0):
    return (1.0 - nu) * alpha * y_m / (alpha - 1.0)


def _weighted_quantile(v, nu, alpha, y_m=1.0):
    # Q(u) du with u = 1 - exp(-v); exponents merged so large v does not overflow
    return y_m * (1.0 - nu) ** (1.0 / alpha) * np.exp(-v * (1.0 - 1.0 / alpha))


def pareto_share_quad(nu, alpha, p, q, y_m=1.0):
    """Share of income held by population fractions ``(p, q]`` by quadrature."""
    lo = max(p, nu)
    if q <= lo:
        return 0.0
    # substitution v = -log(1 - u) tames the singularity at u = 1
    f = lambda v: _weighted_quantile(v, nu, alpha, y_m)
    a = -np.log1p(-lo)
    b = np.inf if q >= 1.0 else -np.log1p(-q)
    val, _ = integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-13, limit=400)
    return val / pareto_mean(nu, alpha, y_m)


def pareto_gini_quad(nu, alpha):
    """Gini as ``2 E[U Q(U)] / mu - 1`` by quadrature of the quantile function."""
    f = lambda v: -np.expm1(-v) * _weighted_quantile(v, nu, alpha)
    val, _ = integrate.quad(f, -np.log1p(-nu), np.inf, epsabs=1e-14, epsrel=1e-13, limit=400)
    return 2.0 * val / pareto_mean(nu, alpha) - 1.0


# ---------------------------------------------------------------------------
# regressions


def lstsq_fit(X, y):
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return beta, y - X @ beta


def dummy_panel_ols(df, dep, slopes, unit="country", time="year"):
    """Slopes from least squares with explicit unit and period indicators."""
    d = df.dropna(subset=[dep, *slopes])
    units = sorted(d[unit].unique())
    periods = sorted(d[time].unique())
    cols = [d[s].to_numpy(float) for s in slopes]
    cols += [(d[unit] == u).to_numpy(float) for u in units]
    cols += [(d[time] == t).to_numpy(float) for t in periods[1:]]
    X = np.column_stack(cols)
    beta, resid = lstsq_fit(X, d[dep].to_numpy(float))
    return beta[: len(slopes)], resid, d


def cluster_sandwich_loop(X, resid, groups, k_count=None):
    """(X'X)^-1 [sum_g X_g' u_g u_g' X_g] (X'X)^-1 times G/(G-1) (N-1)/(N-K), with explicit loops."""
    n, k = X.shape
    K = k if k_count is None else k_count
    bread = np.linalg.inv(X.T @ X)
    meat = np.zeros((k, k))
    labels = list(dict.fromkeys(groups))
    groups = np.asarray(groups)
    for g in labels:
        idx = groups == g
        sg = X[idx].T @ resid[idx]
        meat += np.outer(sg, sg)
    G = len(labels)
    return G / (G - 1) * (n - 1) / (n - K) * bread @ meat @ bread
