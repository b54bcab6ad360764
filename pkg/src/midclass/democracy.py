"""Five-year democracy panels and middle-class regressions.

The estimated equation is

    DEM[i,t] = rho DEM[i,t-5] + b MIDCLASS[i,t-5] + g' X[i,t-5] + d_t + d_i + e[i,t]

with country and period effects, errors clustered by country and 90%
confidence intervals. Controls ``X`` are log GDP per capita, Gini, Gini
squared and schooling, all lagged. No multiple-testing correction is
applied to the percentile sweep.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .distribution import N_PERCENTILES, QuantileInterval, cumulative_shares, relative_income_share_rows
from .errors import DegenerateDesignError, DomainError, MidclassError
from .frontier import CountryClasses, country_specific_classes
from .inequality import gini_rows
from .regression import PanelSpec, RegressionFit, panel_fe, standardize

logger = logging.getLogger(__name__)

DEMOCRACY_KEYS = ("vdem_polyarchy", "vdem_liberal", "polity", "dd_binary")
CONTROLS = ("log_gdp_pc", "gini", "gini_sq", "schooling")
CI_LEVEL = 0.90
STEP = 5

SHARE_COLS = tuple(f"s{k}" for k in range(1, N_PERCENTILES + 1))
INCOME_COLS = tuple(f"y{k}" for k in range(1, N_PERCENTILES + 1))


@dataclass(frozen=True)
class MidclassDef:
    """One way of measuring the middle class.

    ``kind`` is ``interval``, ``relative_income``, ``country_specific`` or
    ``percentile``.
    """

    kind: str
    p: int = 0
    q: int = 0
    lo: float = 0.0
    hi: float = 0.0
    M: int = 0
    k: int = 0

    @classmethod
    def interval(cls, p, q):
        QuantileInterval(p, q)
        return cls("interval", p=p, q=q)

    @classmethod
    def relative_income(cls, lo, hi):
        if not 0 < lo < hi:
            raise DomainError("relative-income bounds need 0 < lo < hi")
        return cls("relative_income", lo=lo, hi=hi)

    @classmethod
    def country_specific(cls, M):
        return cls("country_specific", M=M)

    @classmethod
    def percentile(cls, k):
        if not 1 <= k <= N_PERCENTILES:
            raise DomainError("percentile must be in 1..100")
        return cls("percentile", k=k)

    @classmethod
    def parse(cls, text: str) -> "MidclassDef":
        t = text.strip().lower()
        if t.startswith("rel:"):
            lo, hi = t[4:].split(",")
            return cls.relative_income(float(lo), float(hi))
        if t.startswith("country:"):
            return cls.country_specific(int(t[8:]))
        if t.startswith("pct:"):
            return cls.percentile(int(t[4:]))
        p, q = t.strip("()").split(",")
        return cls.interval(int(p), int(q))

    @property
    def label(self) -> str:
        if self.kind == "interval":
            return f"({self.p},{self.q})"
        if self.kind == "relative_income":
            return f"({self.lo * 100:g}%,{self.hi * 100:g}%) of median"
        if self.kind == "country_specific":
            return f"country-specific M={self.M}"
        return f"percentile {self.k}"

    @property
    def group(self) -> str:
        """``standard`` definitions from the literature or ``endogenous`` insensitive classes."""
        if self.kind == "country_specific":
            return "endogenous"
        if self.kind == "interval" and (self.p, self.q) in ((65, 95), (48, 98)):
            return "endogenous"
        return "standard"


DEFAULT_DEFINITIONS = (
    MidclassDef.interval(20, 80),
    MidclassDef.relative_income(0.75, 2.0),
    MidclassDef.interval(40, 90),
    MidclassDef.interval(65, 95),
    MidclassDef.interval(48, 98),
    MidclassDef.country_specific(30),
    MidclassDef.country_specific(50),
)


@dataclass
class FiveYearTable:
    """Rows at ``start, start+5, ...`` with every regressor lagged one period."""

    frame: pd.DataFrame
    periods: Tuple[int, ...]
    n_dropped: int
    panel: object = field(repr=False, default=None)
    measure: str = "gini"
    _classes: Dict[int, CountryClasses] = field(default_factory=dict, repr=False)

    def country_classes(self, M: int) -> CountryClasses:
        """Per-country size-``M`` classes from the annual panel, frozen once computed."""
        if M not in self._classes:
            if self.panel is None:
                raise DomainError("country-specific classes need the source panel")
            self._classes[M] = country_specific_classes(self.panel, self.measure, M)
        return self._classes[M]

    def lag_shares(self) -> np.ndarray:
        return self.frame[list(SHARE_COLS)].to_numpy(float)

    def lag_incomes(self) -> np.ndarray:
        return self.frame[list(INCOME_COLS)].to_numpy(float)


def build_five_year_panel(panel, start_year: int, end_year: int, required: Sequence[str] = (),
                          measure: str = "gini") -> FiveYearTable:
    """Sample the panel every five years and attach one-period lags.

    A row needs its country's distribution five years earlier; rows without
    it, or missing any column named in ``required``, are dropped and counted.
    """
    if end_year < start_year + 2 * STEP:
        raise DomainError(f"need end_year >= start_year + 10 for two usable periods, got {start_year}..{end_year}")
    periods = tuple(range(start_year, end_year + 1, STEP))
    keys = panel.keys
    index = {k: i for i, k in enumerate(keys)}
    S = panel.share_matrix()
    I = panel.income_matrix()
    gini = gini_rows(S)
    cov = {k: panel.covariate(k) for k in ("gdp_pc", "schooling", *DEMOCRACY_KEYS)}
    rows, lag_rows = [], []
    n_candidates = 0
    for (c, y), i in index.items():
        if y not in periods:
            continue
        n_candidates += 1
        j = index.get((c, y - STEP))
        if j is None:
            continue
        rows.append(i)
        lag_rows.append(j)
    rows = np.array(rows, dtype=int)
    lag = np.array(lag_rows, dtype=int)
    data = {
        "country": [keys[i][0] for i in rows],
        "year": [keys[i][1] for i in rows],
    }
    for k in DEMOCRACY_KEYS:
        data[k] = cov[k][rows] if rows.size else []
        data[f"{k}_lag"] = cov[k][lag] if rows.size else []
    with np.errstate(divide="ignore", invalid="ignore"):
        data["log_gdp_pc"] = np.log(cov["gdp_pc"][lag]) if rows.size else []
    data["gini"] = gini[lag] if rows.size else []
    data["gini_sq"] = gini[lag] ** 2 if rows.size else []
    data["schooling"] = cov["schooling"][lag] if rows.size else []
    frame = pd.DataFrame(data)
    shares = pd.DataFrame(S[lag] if rows.size else np.empty((0, N_PERCENTILES)), columns=SHARE_COLS)
    incomes = pd.DataFrame(I[lag] if rows.size else np.empty((0, N_PERCENTILES)), columns=INCOME_COLS)
    frame = pd.concat([frame, shares, incomes], axis=1)
    if required:
        ok = frame[list(required)].notna().all(axis=1)
        frame = frame.loc[ok].reset_index(drop=True)
    frame = frame.sort_values(["country", "year"], kind="mergesort").reset_index(drop=True)
    n_dropped = n_candidates - len(frame)
    return FiveYearTable(frame, periods, n_dropped, panel, measure)


def midclass_values(table: FiveYearTable, definition: MidclassDef) -> np.ndarray:
    """Lagged middle-class share of each row under ``definition`` (NaN where undefined)."""
    S = table.lag_shares()
    if definition.kind == "percentile":
        return S[:, definition.k - 1].copy()
    C = cumulative_shares(S) if len(S) else np.zeros((0, N_PERCENTILES + 1))
    if definition.kind == "interval":
        return C[:, definition.q] - C[:, definition.p]
    if definition.kind == "relative_income":
        return relative_income_share_rows(S, table.lag_incomes(), definition.lo, definition.hi)
    classes = table.country_classes(definition.M).intervals()
    out = np.full(len(S), np.nan)
    for r, c in enumerate(table.frame["country"]):
        iv = classes.get(c)
        if iv is not None:
            out[r] = C[r, iv.q] - C[r, iv.p]
    return out


def _spec(democracy_key) -> PanelSpec:
    return PanelSpec(democracy_key, ("midclass", *CONTROLS), lagged_dependent=True,
                     unit_effects=True, time_effects=True, cluster_by="country")


def estimate(table: FiveYearTable, democracy_key: str, midclass: np.ndarray, standardized: bool = False,
             dependent: Optional[np.ndarray] = None, dependent_lag: Optional[np.ndarray] = None) -> RegressionFit:
    """Fit the democracy equation with ``midclass`` as the variable of interest."""
    if democracy_key not in DEMOCRACY_KEYS:
        raise DomainError(f"unknown democracy measure {democracy_key!r}")
    cols = ["country", "year", democracy_key, f"{democracy_key}_lag", *CONTROLS]
    df = table.frame[cols].copy()
    if dependent is not None:
        df[democracy_key] = dependent
        df[f"{democracy_key}_lag"] = dependent_lag
    df["midclass"] = midclass
    if standardized:
        ok = df.notna().all(axis=1).to_numpy()
        vals = df["midclass"].to_numpy(float).copy()
        vals[ok] = standardize(vals[ok])
        df["midclass"] = vals
    return panel_fe(df, _spec(democracy_key))


@dataclass(frozen=True)
class DemocracyRun:
    democracy_key: str
    definition: MidclassDef
    fit: Optional[RegressionFit]
    n_countries: int = 0
    n_periods: int = 0
    note: str = ""

    @property
    def skipped(self) -> bool:
        return self.fit is None

    def coefficient(self) -> Tuple[float, float, float, float]:
        """Coefficient, clustered SE and the 90% interval of the middle-class term."""
        if self.fit is None:
            return (np.nan,) * 4
        lo, hi = self.fit.conf_int("midclass", CI_LEVEL)
        return self.fit.coef("midclass"), self.fit.se("midclass"), lo, hi


def _counts(table, fit_rows_mask=None):
    f = table.frame if fit_rows_mask is None else table.frame.loc[fit_rows_mask]
    return f["country"].nunique(), f["year"].nunique()


def midclass_comparison(table: FiveYearTable, democracy_key: str,
                        definitions: Sequence[MidclassDef] = DEFAULT_DEFINITIONS) -> List[DemocracyRun]:
    """One regression per definition with identical controls and effects, in the given order.

    Shares enter unstandardized, so coefficients are per unit of income share.
    """
    runs = []
    for d in definitions:
        values = midclass_values(table, d)
        if np.all(np.isnan(values)):
            note = "skipped: mean incomes unavailable" if d.kind == "relative_income" else "skipped: no values"
            logger.warning("%s for %s", note, d.label)
            runs.append(DemocracyRun(democracy_key, d, None, note=note))
            continue
        try:
            fit = estimate(table, democracy_key, values)
        except MidclassError as exc:
            runs.append(DemocracyRun(democracy_key, d, None, note=f"skipped: {exc}"))
            continue
        used = ~np.isnan(values)
        n_c, n_t = _counts(table, used)
        runs.append(DemocracyRun(democracy_key, d, fit, n_c, n_t))
    return runs


def percentile_sweep(table: FiveYearTable, democracy_key: str, placebo_seed: Optional[int] = None,
                     level: float = CI_LEVEL) -> pd.DataFrame:
    """Coefficient of each lagged, standardized percentile share (1..100).

    With ``placebo_seed`` the democracy series (and its lag) is replaced by
    independent standard-normal noise, drawn afresh for every percentile from
    a spawned seed sequence; about ``1 - level`` of percentiles should then
    appear significant.
    """
    S = table.lag_shares()
    n = len(S)
    children = np.random.SeedSequence(placebo_seed).spawn(N_PERCENTILES) if placebo_seed is not None else None
    records = []
    for k in range(1, N_PERCENTILES + 1):
        dep = dep_lag = None
        if children is not None:
            rng = np.random.default_rng(children[k - 1])
            dep, dep_lag = rng.standard_normal(n), rng.standard_normal(n)
        rec = {"percentile": k}
        try:
            fit = estimate(table, democracy_key, S[:, k - 1], standardized=True, dependent=dep, dependent_lag=dep_lag)
            lo, hi = fit.conf_int("midclass", level)
            rec.update(coef=fit.coef("midclass"), se=fit.se("midclass"), ci_lo=lo, ci_hi=hi,
                       n_obs=fit.n_obs, n_clusters=fit.n_clusters, note="")
        except (DegenerateDesignError, DomainError) as exc:
            rec.update(coef=np.nan, se=np.nan, ci_lo=np.nan, ci_hi=np.nan, n_obs=0, n_clusters=0, note=str(exc))
        records.append(rec)
    out = pd.DataFrame.from_records(records)
    out["significant_pos"] = out["ci_lo"] > 0
    out["significant_neg"] = out["ci_hi"] < 0
    return out


def sweep_summary(sweep: pd.DataFrame) -> Dict[str, float]:
    """Headline numbers of a sweep.

    ``weighted_positive_percentile`` weights significant-positive
    percentiles by coefficient magnitude.
    """
    pos = sweep.loc[sweep["significant_pos"]]
    mean_pos = float(pos["percentile"].mean()) if len(pos) else float("nan")
    w = pos["coef"].abs()
    weighted = float((pos["percentile"] * w).sum() / w.sum()) if len(pos) and w.sum() > 0 else float("nan")
    top = sweep.loc[sweep["percentile"] == N_PERCENTILES].iloc[0]
    return {
        "n_significant": int((sweep["significant_pos"] | sweep["significant_neg"]).sum()),
        "n_significant_positive": int(len(pos)),
        "mean_positive_percentile": mean_pos,
        "weighted_positive_percentile": weighted,
        "top_percentile_coef": float(top["coef"]),
        "top_percentile_ci_hi": float(top["ci_hi"]),
    }
