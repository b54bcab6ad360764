"""Seeded WID-style fixtures for tests, benchmarks and demos.

Country-year distributions are zero-inflated Pareto societies whose Gini
and zero mass drift slowly around country-specific levels. Democracy
scores follow a planted five-year dynamic equation so estimators can be
checked against known coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .data_io import COVARIATE_SCHEMA, Panel
from .distribution import N_PERCENTILES
from .pareto import DEFAULT_SEED, _lorenz, alpha_from_gini


@dataclass(frozen=True)
class SyntheticConfig:
    n_countries: int = 40
    first_year: int = 1980
    last_year: int = 2020
    gini_mean: float = 0.45
    gini_between_sd: float = 0.06
    gini_step_sd: float = 0.004
    nu_lo: float = 0.02
    nu_hi: float = 0.12
    nu_step_sd: float = 0.002
    seed: int = DEFAULT_SEED


def _shares_from(gini: np.ndarray, nu: np.ndarray) -> np.ndarray:
    alpha = np.array([alpha_from_gini(g, v) for g, v in zip(gini, nu)])
    e = 1.0 - 1.0 / alpha
    u = np.arange(N_PERCENTILES + 1) / N_PERCENTILES
    L = _lorenz(u[None, :], nu[:, None], e[:, None])
    L[:, -1] = 1.0
    L[:, 0] = 0.0
    return np.diff(L, axis=1)


def synthetic_panel(config: SyntheticConfig = SyntheticConfig()) -> Panel:
    """Annual panel with shares, mean incomes, GDP per capita, schooling and external Gini."""
    rng = np.random.default_rng(config.seed)
    years = np.arange(config.first_year, config.last_year + 1)
    T, n = years.size, config.n_countries
    g0 = np.clip(rng.normal(config.gini_mean, config.gini_between_sd, n), 0.25, 0.75)
    v0 = rng.uniform(config.nu_lo, config.nu_hi, n)
    g = g0[:, None] + np.cumsum(rng.normal(0, config.gini_step_sd, (n, T)), axis=1)
    # mean-reverting zero mass kept inside its starting percentile cell, so the
    # pattern of all-zero bottom percentiles is stable within a country
    x = np.zeros((n, T))
    eps = rng.normal(0, config.nu_step_sd, (n, T))
    for t in range(T):
        x[:, t] = (0.8 * x[:, t - 1] if t else 0.0) + eps[:, t]
    cell = np.floor(v0 * N_PERCENTILES) / N_PERCENTILES
    v = np.clip(v0[:, None] + x, cell[:, None] + 1e-3, cell[:, None] + 1.0 / N_PERCENTILES - 1e-3)
    g = np.clip(g, v + 0.05, 0.9)
    log_gdp = rng.normal(8.5, 1.0, n)[:, None] + np.cumsum(rng.normal(0.015, 0.03, (n, T)), axis=1)
    school = rng.uniform(3.0, 9.0, n)[:, None] + 0.08 * (years - config.first_year)[None, :] + rng.normal(0, 0.1, (n, T))

    keys = [(f"C{c:03d}", int(y)) for c in range(n) for y in years]
    shares = _shares_from(g.ravel(), v.ravel())
    incomes = shares * N_PERCENTILES * np.exp(log_gdp.ravel())[:, None]
    cov = {"gdp_pc": np.exp(log_gdp.ravel()), "schooling": school.ravel(), "gini_ext": g.ravel()}
    return Panel.from_arrays(keys, shares, incomes, covariates=cov,
                             provenance={"source": f"synthetic-seed{config.seed}-n{n}"})


@dataclass(frozen=True)
class PlantedDemocracy:
    """``DEM[t] = rho DEM[t-5] + b MID[t-5] + g GINI[t-5] + d_i + d_t + e``, ``MID = S(p,q)``."""

    b: float = 2.0
    rho: float = 0.3
    gamma_gini: float = -0.5
    noise_sd: float = 0.02
    p: int = 48
    q: int = 98
    step: int = 5


def plant_democracy(panel: Panel, dgp: PlantedDemocracy = PlantedDemocracy(), seed: int = DEFAULT_SEED,
                    key: str = "vdem_polyarchy") -> Panel:
    """Attach a democracy series generated by ``dgp`` on the five-year grid.

    Off-grid years stay missing. The first grid year is drawn from the
    process's rough stationary level.
    """
    rng = np.random.default_rng(seed)
    keys = panel.keys
    index = {k: i for i, k in enumerate(keys)}
    C = panel.cumulative_shares()
    mid = C[:, dgp.q] - C[:, dgp.p]
    gini = panel.inequality("gini")
    countries = panel.countries()
    years = panel.years()
    grid = list(range(years[0], years[-1] + 1, dgp.step))
    unit_fx = {c: rng.normal(0.0, 0.1) for c in countries}
    time_fx = {y: rng.normal(0.0, 0.05) for y in grid}
    dem = np.full(len(keys), np.nan)
    for c in countries:
        prev = None
        for y in grid:
            i = index.get((c, y))
            if i is None:
                prev = None
                continue
            j = index.get((c, y - dgp.step))
            if prev is None or j is None:
                dem[i] = 0.5 + rng.normal(0.0, 0.05)
            else:
                dem[i] = (dgp.rho * prev + dgp.b * mid[j] + dgp.gamma_gini * gini[j]
                          + unit_fx[c] + time_fx[y] + rng.normal(0.0, dgp.noise_sd))
            prev = dem[i]
    values = dict(panel.covariates)
    values[key] = dem
    return panel.with_covariates(values)


def write_shares_csv(panel: Panel, path, percent: bool = False) -> Path:
    """Long format: ``country,year,percentile,share[,average_income]``."""
    path = Path(path)
    S = panel.share_matrix() * (100.0 if percent else 1.0)
    I = panel.income_matrix()
    n = len(panel)
    df = pd.DataFrame({
        "country": np.repeat(panel.country_array(), N_PERCENTILES),
        "year": np.repeat(panel.year_array(), N_PERCENTILES),
        "percentile": np.tile(np.arange(1, N_PERCENTILES + 1), n),
        "share": S.ravel(),
    })
    if n and np.all(np.isfinite(I)):
        df["average_income"] = I.ravel()
    df.to_csv(path, index=False, float_format="%.17g")
    return path


def write_covariates_csv(panel: Panel, path, keys: Optional[Sequence[str]] = None) -> Path:
    """Long format: ``country,year,variable,value``; missing values are omitted."""
    path = Path(path)
    cov = panel.covariates
    keys = [k for k in (keys or COVARIATE_SCHEMA) if k in cov]
    parts = []
    for k in keys:
        v = cov[k]
        ok = ~np.isnan(v)
        parts.append(pd.DataFrame({"country": panel.country_array()[ok], "year": panel.year_array()[ok],
                                   "variable": k, "value": v[ok]}))
    df = pd.concat(parts, ignore_index=True) if parts else pd.DataFrame(columns=["country", "year", "variable", "value"])
    df = df.sort_values(["country", "year", "variable"], kind="mergesort")
    df.to_csv(path, index=False, float_format="%.17g")
    return path
