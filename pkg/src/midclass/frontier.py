"""Sensitivity of interval shares to inequality, and the insensitive middle class.

Every function here takes a *sample*: any object exposing

* ``cumulative_shares()`` -> ``(n, 101)`` Lorenz ordinates at integer percentiles,
* ``lorenz_at(pct)`` -> ordinates at fractional percentiles,
* ``inequality(measure)`` -> ``(n,)`` regressor values,
* ``sample_id``.

:class:`midclass.data_io.Panel` and :class:`midclass.pareto.SocietySample`
both qualify. An explicit ``inequality=`` vector overrides the measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .distribution import N_PERCENTILES, QuantileInterval
from .errors import DegenerateDesignError, DomainError
from .inequality import as_measure

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Objective:
    """``beta2`` (squared slope) or ``r2`` of a polynomial fit of the given degree."""

    kind: str = "beta2"
    degree: int = 1

    def __post_init__(self):
        if self.kind not in ("beta2", "r2"):
            raise DomainError(f"objective must be beta2 or r2[:degree], got {self.kind!r}")
        if not (1 <= self.degree <= 8):
            raise DomainError(f"polynomial degree must be in [1, 8], got {self.degree}")

    @classmethod
    def parse(cls, text) -> "Objective":
        if isinstance(text, Objective):
            return text
        text = str(text).strip().lower()
        if text in ("beta2", "beta_squared"):
            return cls("beta2", 1)
        if text.startswith("r2") or text.startswith("r_squared"):
            _, _, deg = text.partition(":")
            return cls("r2", int(deg) if deg else 1)
        raise DomainError(f"cannot parse objective {text!r}; use beta2 or r2:<degree>")

    def __str__(self):
        return "beta2" if self.kind == "beta2" else f"r2:{self.degree}"


@dataclass(frozen=True)
class BetaSurface:
    p: np.ndarray
    q: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    beta_se: np.ndarray
    r_squared: np.ndarray
    inequality_kind: str
    sample_id: str
    n_obs: int
    _index: Dict[Tuple[int, int], int] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        idx = {(int(a), int(b)): i for i, (a, b) in enumerate(zip(self.p, self.q))}
        object.__setattr__(self, "_index", idx)

    def __len__(self):
        return len(self.p)

    def lookup(self, p: int, q: int) -> int:
        return self._index[(int(p), int(q))]

    def beta_at(self, p: int, q: int) -> float:
        return float(self.beta[self.lookup(p, q)])

    def r2_at(self, p: int, q: int) -> float:
        return float(self.r_squared[self.lookup(p, q)])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"p": self.p, "q": self.q, "alpha": self.alpha, "beta": self.beta,
                             "se": self.beta_se, "r2": self.r_squared})


@dataclass(frozen=True)
class MiddleClassSolution:
    interval: QuantileInterval
    objective: str
    objective_value: float
    sample_id: str
    size_M: int
    beta: float = float("nan")
    r_squared: float = float("nan")


def _regressor(sample, measure, inequality):
    x = np.asarray(inequality if inequality is not None else sample.inequality(measure), dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise DomainError(f"need at least 3 units, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DomainError("inequality regressor has non-finite values")
    if np.ptp(x) == 0.0:
        raise DegenerateDesignError("inequality is constant across the sample")
    return x


def _grid(step: int) -> np.ndarray:
    if step < 1:
        raise DomainError("grid_step must be >= 1")
    g = list(range(0, N_PERCENTILES + 1, step))
    if g[-1] != N_PERCENTILES:
        g.append(N_PERCENTILES)
    return np.array(g)


def beta_map(sample, measure="gini", grid_step: int = 1, inequality=None) -> BetaSurface:
    """Regress ``S(p, q)`` on inequality for every interval of the grid."""
    x = _regressor(sample, measure, inequality)
    grid = _grid(grid_step)
    C = np.asarray(sample.cumulative_shares())[:, grid]
    n = x.size
    xc = x - x.mean()
    sxx = float(xc @ xc)
    out = {k: [] for k in ("p", "q", "alpha", "beta", "se", "r2")}
    for i in range(len(grid) - 1):
        Y = C[:, i + 1:] - C[:, [i]]
        ybar = Y.mean(axis=0)
        Yc = Y - ybar
        beta = (xc @ Yc) / sxx
        resid = Yc - np.outer(xc, beta)
        ssr = np.einsum("ij,ij->j", resid, resid)
        syy = np.einsum("ij,ij->j", Yc, Yc)
        with np.errstate(divide="ignore", invalid="ignore"):
            r2 = np.where(syy > 0, np.clip(1.0 - ssr / syy, 0.0, 1.0), 0.0)
        out["p"].append(np.full(beta.size, grid[i]))
        out["q"].append(grid[i + 1:])
        out["alpha"].append(ybar - beta * x.mean())
        out["beta"].append(beta)
        out["se"].append(np.sqrt(ssr / (n - 2) / sxx))
        out["r2"].append(r2)
    cat = {k: np.concatenate(v) for k, v in out.items()}
    kind = "external" if inequality is not None else str(as_measure(measure))
    return BetaSurface(cat["p"].astype(int), cat["q"].astype(int), cat["alpha"], cat["beta"], cat["se"],
                       cat["r2"], kind, getattr(sample, "sample_id", "sample"), n)


def zero_frontier(surface: BetaSurface) -> List[Tuple[int, Optional[float]]]:
    """For each lower bound ``p``, the upper bound where ``beta`` changes sign.

    Leading exact zeros (empty-income intervals) are skipped; the crossing is
    linearly interpolated between adjacent grid points. ``None`` marks a
    ``p`` without a sign change.
    """
    result = []
    for p in np.unique(surface.p):
        sel = np.flatnonzero(surface.p == p)
        order = sel[np.argsort(surface.q[sel])]
        qs, bs = surface.q[order].astype(float), surface.beta[order]
        nz = np.flatnonzero(bs != 0.0)
        crossing = None
        if nz.size:
            for k in range(nz[0], len(bs) - 1):
                b0, b1 = bs[k], bs[k + 1]
                if b1 == 0.0:
                    crossing = qs[k + 1]
                    break
                if (b0 < 0) != (b1 < 0):
                    crossing = qs[k] + (qs[k + 1] - qs[k]) * (-b0) / (b1 - b0)
                    break
        result.append((int(p), crossing))
    return result


def _centered_basis(x: np.ndarray, degree: int) -> np.ndarray:
    """Orthonormal basis of the non-constant part of a degree-``degree`` polynomial design."""
    z = (x - x.mean()) / x.std()
    V = np.vander(z, degree + 1, increasing=True)
    Q, R = np.linalg.qr(V, mode="reduced")
    d = np.abs(np.diag(R))
    if np.any(d <= 1e-10 * d.max()):
        raise DegenerateDesignError(f"polynomial design of degree {degree} is rank deficient")
    return Q[:, 1:]


def objective_values(Y: np.ndarray, x: np.ndarray, objective: Objective) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Objective, slope and R^2 for each column of the share matrix ``Y``."""
    xc = x - x.mean()
    sxx = float(xc @ xc)
    Yc = Y - Y.mean(axis=0)
    beta = (xc @ Yc) / sxx
    syy = np.einsum("ij,ij->j", Yc, Yc)
    if objective.kind == "r2" and objective.degree > 1:
        proj = _centered_basis(x, objective.degree).T @ Yc
        explained = np.einsum("ij,ij->j", proj, proj)
    else:
        explained = beta**2 * sxx
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(syy > 0, np.clip(explained / syy, 0.0, 1.0), 0.0)
    value = beta**2 if objective.kind == "beta2" else r2
    return value, beta, r2


def _bounds(M, p_bounds):
    if not (1 <= M <= N_PERCENTILES):
        raise DomainError(f"M must be in [1, 100], got {M}")
    lo, hi = (0, N_PERCENTILES - M) if p_bounds is None else (int(p_bounds[0]), int(p_bounds[1]))
    if lo < 0 or hi > N_PERCENTILES - M or lo > hi:
        raise DomainError(f"p_bounds ({lo}, {hi}) must lie within [0, {N_PERCENTILES - M}] for M={M}")
    return lo, hi


def _solve_rows(C, x, M, objective, p_bounds, sample_id):
    lo, hi = _bounds(M, p_bounds)
    ps = np.arange(lo, hi + 1)
    Y = C[:, ps + M] - C[:, ps]
    value, beta, r2 = objective_values(Y, x, objective)
    # intervals holding no income anywhere are trivially flat, not a class
    empty = np.all(Y == 0.0, axis=0)
    value = np.where(empty, np.inf, value)
    if not np.any(np.isfinite(value)):
        raise DomainError(f"no feasible interval of size {M} in p-range [{lo}, {hi}]")
    k = int(np.argmin(value))  # first minimum: ties go to the smaller p
    p = int(ps[k])
    return MiddleClassSolution(QuantileInterval(p, p + M), str(objective), float(value[k]), sample_id, M,
                               float(beta[k]), float(r2[k]))


def solve_middle_class(sample, measure="gini", M: int = 50, objective="beta2", p_bounds=None,
                       inequality=None) -> MiddleClassSolution:
    """Exhaustive search over integer ``p`` for the flattest interval ``(p, p+M)``."""
    objective = Objective.parse(objective)
    x = _regressor(sample, measure, inequality)
    C = np.asarray(sample.cumulative_shares())
    return _solve_rows(C, x, M, objective, p_bounds, getattr(sample, "sample_id", "sample"))


def golden_section(f: Callable[[float], float], a: float, b: float, tol: float = 1e-7) -> float:
    """Minimize a unimodal ``f`` on ``[a, b]``."""
    if b < a:
        a, b = b, a
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def refine_continuous(sample, measure="gini", M: int = 50, objective="r2", degree: Optional[int] = None,
                      p_bounds=None, inequality=None, tol: float = 1e-7) -> float:
    """Fractional lower bound minimizing the objective near the integer solution.

    Shares at fractional percentiles come from ``sample.lorenz_at`` (closed
    form for Pareto samples, linear interpolation for panels).
    """
    objective = Objective.parse(objective)
    if degree is not None:
        objective = Objective(objective.kind, degree)
    x = _regressor(sample, measure, inequality)
    base = solve_middle_class(sample, measure, M, objective, p_bounds, inequality=x)
    lo, hi = _bounds(M, p_bounds)
    p0 = base.interval.p
    a, b = max(lo, p0 - 1), min(hi, p0 + 1)

    def f(p):
        y = sample.lorenz_at(p + M) - sample.lorenz_at(p)
        return float(objective_values(y[:, None], x, objective)[0][0])

    if a == b:
        return float(a)
    return golden_section(f, float(a), float(b), tol)


@dataclass(frozen=True)
class SizeSweep:
    solutions: Tuple[MiddleClassSolution, ...]
    common_percentiles: Tuple[int, ...]


def m_size_sweep(sample, measure="gini", M_lo: int = 1, M_hi: int = 60, objective="beta2",
                 inequality=None) -> SizeSweep:
    """One solution per size; also the percentiles contained in every solution."""
    if not (1 <= M_lo <= M_hi <= N_PERCENTILES):
        raise DomainError(f"need 1 <= M_lo <= M_hi <= 100, got {M_lo}, {M_hi}")
    objective = Objective.parse(objective)
    x = _regressor(sample, measure, inequality)
    C = np.asarray(sample.cumulative_shares())
    sid = getattr(sample, "sample_id", "sample")
    sols = tuple(_solve_rows(C, x, M, objective, None, sid) for M in range(M_lo, M_hi + 1))
    common = set(range(1, N_PERCENTILES + 1))
    for s in sols:
        common &= set(range(s.interval.p + 1, s.interval.q + 1))
    return SizeSweep(sols, tuple(sorted(common)))


@dataclass(frozen=True)
class CountryClasses:
    M: int
    solutions: Dict[str, MiddleClassSolution]
    skipped: Tuple[Tuple[str, str], ...]

    def initial_percentiles(self, exclude: Sequence[str] = ()) -> np.ndarray:
        ex = set(exclude)
        return np.array([s.interval.p for c, s in sorted(self.solutions.items()) if c not in ex], dtype=float)

    def mean_initial(self, exclude: Sequence[str] = ()) -> float:
        v = self.initial_percentiles(exclude)
        return float(v.mean()) if v.size else float("nan")

    def fraction_at(self, p: int, exclude: Sequence[str] = ()) -> float:
        v = self.initial_percentiles(exclude)
        return float(np.mean(v == p)) if v.size else float("nan")

    def histogram(self, exclude: Sequence[str] = ()) -> Dict[int, int]:
        v = self.initial_percentiles(exclude).astype(int)
        vals, counts = np.unique(v, return_counts=True)
        return {int(a): int(b) for a, b in zip(vals, counts)}

    def intervals(self) -> Dict[str, QuantileInterval]:
        return {c: s.interval for c, s in self.solutions.items()}


def country_specific_classes(panel, measure="gini", M: int = 50, objective="r2:1", p_bounds=None,
                             min_years: int = 3) -> CountryClasses:
    """Solve the size-``M`` problem separately on each country's years.

    ``p_bounds`` defaults to ``(1, 99 - M)`` so both a poor and a rich class
    remain (for ``M = 50`` this is ``p`` in ``1..49``).
    """
    objective = Objective.parse(objective)
    if p_bounds is None:
        p_bounds = (1, N_PERCENTILES - 1 - M)
    x_all = np.asarray(panel.inequality(measure), dtype=float)
    C_all = np.asarray(panel.cumulative_shares())
    countries = panel.country_array()
    codes, uniq = pd.factorize(countries, sort=True)
    solutions, skipped = {}, []
    for ci, c in enumerate(uniq):
        rows = np.flatnonzero(codes == ci)
        if rows.size < min_years:
            skipped.append((str(c), f"only {rows.size} years"))
            continue
        x = x_all[rows]
        if np.ptp(x) == 0.0:
            skipped.append((str(c), "constant inequality series"))
            continue
        try:
            solutions[str(c)] = _solve_rows(C_all[rows], x, M, objective, p_bounds, f"country:{c}")
        except (DegenerateDesignError, DomainError) as exc:
            skipped.append((str(c), str(exc)))
    return CountryClasses(M, solutions, tuple(skipped))
