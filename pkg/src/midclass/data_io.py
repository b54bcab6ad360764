"""Panels of percentile shares: delimited-file ingestion, outlier rule, binary cache.

Input layout (header row required, UTF-8, dot decimals)::

    country,year,percentile,share[,average_income]

Covariates come in long form::

    country,year,variable,value

The cache layout is documented in ``docs/FORMATS.md``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd

from .distribution import N_PERCENTILES, SUM_TOL, PercentileDistribution, cumulative_shares, quantize_shares
from .errors import DomainError, InputError, IntegrityError
from .inequality import as_measure

logger = logging.getLogger(__name__)

COVARIATE_SCHEMA = ("gdp_pc", "schooling", "gini_ext", "vdem_polyarchy", "vdem_liberal", "polity", "dd_binary")

Key = Tuple[str, int]


class Panel:
    """Immutable collection of country-year distributions plus covariates.

    Held internally as row-aligned matrices sorted by ``(country, year)``;
    :attr:`units` materializes :class:`PercentileDistribution` objects on
    demand.
    """

    def __init__(self, units: Mapping[Key, PercentileDistribution], covariates=None, provenance=None):
        keys = sorted(units)
        shares = np.array([units[k].shares for k in keys]).reshape(len(keys), N_PERCENTILES)
        incomes = np.full((len(keys), N_PERCENTILES), np.nan)
        for i, k in enumerate(keys):
            if units[k].mean_incomes is not None:
                incomes[i] = units[k].mean_incomes
        clamped = np.array([units[k].clamped for k in keys], dtype=bool)
        cov = _covariate_arrays(keys, covariates or {})
        self._init(keys, shares, incomes, clamped, cov, provenance)

    @classmethod
    def from_arrays(cls, keys, shares, incomes=None, clamped=None, covariates=None, provenance=None) -> "Panel":
        """Fast constructor; ``covariates`` maps key -> array aligned with ``keys``."""
        keys = [(str(c), int(y)) for c, y in keys]
        shares = np.asarray(shares, dtype=float).reshape(len(keys), N_PERCENTILES)
        order = sorted(range(len(keys)), key=keys.__getitem__)
        keys = [keys[i] for i in order]
        shares = shares[order]
        incomes = np.full(shares.shape, np.nan) if incomes is None else np.asarray(incomes, float)[order]
        clamped = np.zeros(len(keys), bool) if clamped is None else np.asarray(clamped, bool)[order]
        cov = {k: np.asarray(v, float)[order] for k, v in (covariates or {}).items()}
        obj = cls.__new__(cls)
        obj._init(keys, shares, incomes, clamped, cov, provenance)
        return obj

    def _init(self, keys, shares, incomes, clamped, cov, provenance):
        if len(set(keys)) != len(keys):
            raise DomainError("duplicate (country, year) units")
        if shares.size and (not np.all(np.isfinite(shares)) or np.any(shares < 0)):
            raise DomainError("shares must be finite and non-negative")
        if shares.size and np.any(np.abs(shares.sum(axis=1) - 1.0) > SUM_TOL):
            raise DomainError("every unit's shares must sum to 1")
        shares = quantize_shares(shares) if shares.size else shares.reshape(0, N_PERCENTILES)
        has_inc = np.all(np.isfinite(incomes), axis=1)
        if np.any(has_inc):
            inc = incomes[has_inc]
            tol = 1e-9 * np.maximum(1.0, np.abs(inc).max(axis=1))
            if np.any(np.diff(inc, axis=1).min(axis=1) < -tol):
                raise DomainError("mean_incomes are not rank ordered")
        incomes = incomes.copy()
        incomes[~has_inc] = np.nan
        for a in (shares, incomes, clamped):
            a.flags.writeable = False
        frozen = {}
        for k, v in sorted(cov.items()):
            if k not in COVARIATE_SCHEMA:
                raise InputError(f"unknown covariate key {k!r}")
            v = np.array(v, dtype=float)
            v.flags.writeable = False
            frozen[k] = v
        self._keys = list(keys)
        self._index = {k: i for i, k in enumerate(self._keys)}
        self._shares = shares
        self._incomes = incomes
        self._clamped = clamped
        self._cov = MappingProxyType(frozen)
        self.provenance = dict(provenance or {})
        self._cum = None

    # -- container protocol -------------------------------------------------
    def __len__(self):
        return len(self._keys)

    def __iter__(self):
        return iter(self._keys)

    def __contains__(self, key):
        return key in self._index

    def __getitem__(self, key: Key) -> PercentileDistribution:
        i = self._index[key]
        inc = self._incomes[i]
        return PercentileDistribution(key[0], key[1], self._shares[i],
                                      None if np.isnan(inc[0]) else inc, bool(self._clamped[i]))

    def __eq__(self, other):
        if not isinstance(other, Panel):
            return NotImplemented
        return (
            self._keys == other._keys
            and np.array_equal(self._shares, other._shares)
            and np.array_equal(self._incomes, other._incomes, equal_nan=True)
            and np.array_equal(self._clamped, other._clamped)
            and set(self._cov) == set(other._cov)
            and all(np.array_equal(self._cov[k], other._cov[k], equal_nan=True) for k in self._cov)
        )

    __hash__ = None

    def __repr__(self):
        return f"Panel({len(self)} units, {len(self.countries())} countries, covariates={list(self._cov)})"

    @property
    def units(self) -> Dict[Key, PercentileDistribution]:
        return {k: self[k] for k in self._keys}

    @property
    def keys(self) -> List[Key]:
        return list(self._keys)

    @property
    def sample_id(self) -> str:
        return str(self.provenance.get("sample_id", self.provenance.get("source", "panel")))

    @property
    def covariates(self) -> Mapping[str, np.ndarray]:
        return self._cov

    def covariate(self, key: str) -> np.ndarray:
        if key not in COVARIATE_SCHEMA:
            raise InputError(f"unknown covariate key {key!r}")
        if key in self._cov:
            return self._cov[key].copy()
        return np.full(len(self), np.nan)

    def countries(self) -> List[str]:
        return sorted({c for c, _ in self._keys})

    def years(self) -> List[int]:
        return sorted({y for _, y in self._keys})

    def country_array(self) -> np.ndarray:
        return np.array([c for c, _ in self._keys], dtype=object)

    def year_array(self) -> np.ndarray:
        return np.array([y for _, y in self._keys], dtype=int)

    def clamped_flags(self) -> np.ndarray:
        return self._clamped.copy()

    # -- sample interface used by the frontier ------------------------------
    def share_matrix(self) -> np.ndarray:
        return self._shares

    def income_matrix(self) -> np.ndarray:
        return self._incomes

    def cumulative_shares(self) -> np.ndarray:
        if self._cum is None:
            self._cum = cumulative_shares(self._shares)
            self._cum.flags.writeable = False
        return self._cum

    def lorenz_at(self, pct) -> np.ndarray:
        """Cumulative share at fractional percentile(s), linear between grid points."""
        C = self.cumulative_shares()
        pct = np.asarray(pct, dtype=float)
        flat = np.atleast_1d(pct)
        lo = np.clip(np.floor(flat).astype(int), 0, N_PERCENTILES - 1)
        w = flat - lo
        out = C[:, lo] * (1.0 - w) + C[:, lo + 1] * w
        return out[:, 0] if pct.ndim == 0 else out

    def interval_shares(self, p, q) -> np.ndarray:
        C = self.cumulative_shares()
        if float(p).is_integer() and float(q).is_integer():
            return C[:, int(q)] - C[:, int(p)]
        return self.lorenz_at(q) - self.lorenz_at(p)

    def inequality(self, measure="gini") -> np.ndarray:
        m = as_measure(measure)
        if m.kind == "external":
            g = self.covariate("gini_ext")
            if np.any(np.isnan(g)):
                raise DomainError("external inequality requested but gini_ext is missing for some units")
            return g
        return m.compute(self._shares)

    # -- derived panels -----------------------------------------------------
    def subset(self, mask) -> "Panel":
        mask = np.asarray(mask)
        if mask.dtype != bool:
            idx = mask
        else:
            idx = np.flatnonzero(mask)
        keys = [self._keys[i] for i in idx]
        cov = {k: v[idx] for k, v in self._cov.items()}
        prov = dict(self.provenance)
        return Panel.from_arrays(keys, self._shares[idx], self._incomes[idx], self._clamped[idx], cov, prov)

    def select(self, countries: Optional[Iterable[str]] = None, years: Optional[Iterable[int]] = None) -> "Panel":
        mask = np.ones(len(self), bool)
        if countries is not None:
            cs = set(countries)
            mask &= np.array([c in cs for c, _ in self._keys])
        if years is not None:
            ys = set(int(y) for y in years)
            mask &= np.array([y in ys for _, y in self._keys])
        return self.subset(mask)

    def drop_countries(self, countries: Iterable[str]) -> "Panel":
        cs = set(countries)
        return self.subset(np.array([c not in cs for c, _ in self._keys], dtype=bool))

    def with_covariates(self, values: Mapping[str, np.ndarray]) -> "Panel":
        cov = dict(self._cov)
        cov.update(values)
        return Panel.from_arrays(self._keys, self._shares, self._incomes, self._clamped, cov, self.provenance)


def _covariate_arrays(keys, covariates) -> Dict[str, np.ndarray]:
    out: Dict[str, np.ndarray] = {}
    index = {k: i for i, k in enumerate(keys)}
    for key, row in covariates.items():
        for var, val in row.items():
            if var not in out:
                out[var] = np.full(len(keys), np.nan)
            if key in index:
                out[var][index[key]] = val
    return out


# ---------------------------------------------------------------------------
# delimited input


@dataclass(frozen=True)
class FormatSpec:
    delimiter: str = ","
    country: str = "country"
    year: str = "year"
    percentile: str = "percentile"
    share: str = "share"
    income: str = "average_income"
    share_scale: str = "auto"  # auto | fraction | percent
    sum_tol: float = SUM_TOL
    series: str = "unspecified"


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_table(path, delimiter, required):
    try:
        df = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False, encoding="utf-8")
    except (UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise InputError(f"{path}: cannot parse delimited file: {exc}") from exc
    cols = [c.strip() for c in df.columns]
    df.columns = cols
    absent = [c for c in required if c not in cols]
    if absent:
        raise InputError(f"{path}: malformed header, missing columns {absent} (found {cols})")
    return df


def _numeric(df, col, problems, path, integer=False):
    raw = df[col].str.strip()
    vals = pd.to_numeric(raw, errors="coerce")
    bad = vals.isna() & (raw != "")
    bad |= raw == ""
    if integer:
        bad |= vals.notna() & (vals != np.floor(vals))
    for i in np.flatnonzero(bad.to_numpy())[:1000]:
        problems.append(f"{path}:{i + 2}: non-numeric {col} {df[col].iloc[i]!r}")
    return vals.to_numpy(float), bad.to_numpy()


def load_shares(path, format_spec: Optional[FormatSpec] = None) -> Panel:
    """Read a long percentile-share table into a validated :class:`Panel`."""
    fs = format_spec or FormatSpec()
    path = Path(path)
    df = _read_table(path, fs.delimiter, [fs.country, fs.year, fs.percentile, fs.share])
    problems: List[str] = []
    year, _ = _numeric(df, fs.year, problems, path, integer=True)
    pct, _ = _numeric(df, fs.percentile, problems, path, integer=True)
    share, _ = _numeric(df, fs.share, problems, path)
    has_income = fs.income in df.columns
    if has_income:
        raw = df[fs.income].str.strip()
        income = pd.to_numeric(raw, errors="coerce").to_numpy(float)
        for i in np.flatnonzero(np.isnan(income) & (raw != "").to_numpy())[:1000]:
            problems.append(f"{path}:{i + 2}: non-numeric {fs.income} {df[fs.income].iloc[i]!r}")
    else:
        income = np.full(len(df), np.nan)
    ok_pct = np.isnan(pct) | ((pct >= 1) & (pct <= N_PERCENTILES))
    for i in np.flatnonzero(~ok_pct)[:1000]:
        problems.append(f"{path}:{i + 2}: percentile {int(pct[i])} outside 1..100")
    if problems:
        raise InputError(f"{path}: {len(problems)} invalid field(s)", problems)

    country = df[fs.country].str.strip().to_numpy(dtype=object)
    table = pd.DataFrame({"country": country, "year": year.astype(int), "pct": pct.astype(int),
                          "share": share, "income": income})
    dup = table.duplicated(["country", "year", "pct"], keep=False)
    if dup.any():
        rows = [f"{path}:{i + 2}: duplicate {table.country[i]}/{table.year[i]}/p{table.pct[i]}"
                for i in np.flatnonzero(dup.to_numpy())[:50]]
        raise InputError(f"{path}: duplicate (country, year, percentile) rows", rows)

    max_share = float(np.nanmax(share)) if share.size else 0.0
    scale = fs.share_scale
    if scale == "auto":
        scale = "percent" if max_share > 1.5 else "fraction"
    if scale == "percent":
        table["share"] = table["share"] / 100.0

    table = table.sort_values(["country", "year", "pct"], kind="mergesort")
    sizes = table.groupby(["country", "year"], sort=True).size()
    complete = sizes[sizes == N_PERCENTILES].index
    incomplete = sizes[sizes != N_PERCENTILES]
    for (c, y), n in incomplete.items():
        logger.warning("dropping %s/%s: %d of 100 percentiles present", c, y, n)
    full = table.set_index(["country", "year"]).loc[complete].reset_index()
    n_units = len(complete)
    S = full["share"].to_numpy().reshape(n_units, N_PERCENTILES)
    inc = full["income"].to_numpy().reshape(n_units, N_PERCENTILES)
    keys = [(str(c), int(y)) for c, y in complete]

    totals = S.sum(axis=1)
    good = np.abs(totals - 1.0) <= fs.sum_tol
    rejected = []
    for i in np.flatnonzero(~good):
        logger.warning("dropping %s/%s: shares sum to %.9g", keys[i][0], keys[i][1], totals[i])
        rejected.append([keys[i][0], keys[i][1], f"shares sum to {totals[i]:.9g}"])
    S, inc = S[good], inc[good]
    keys = [k for k, g in zip(keys, good) if g]
    clamped = np.any(S < 0, axis=1)
    S = np.clip(S, 0.0, None)
    S = S / S.sum(axis=1, keepdims=True)
    inc[~np.all(np.isfinite(inc), axis=1)] = np.nan

    provenance = {
        "source": path.name,
        "sample_id": path.stem,
        "sources": [{"path": str(path), "sha256": file_digest(path), "rows": int(len(df))}],
        "share_scale": scale,
        "share_scale_detected_from_max": max_share,
        "series": fs.series,
        "dropped_incomplete": [[str(c), int(y), int(n)] for (c, y), n in incomplete.items()],
        "dropped_bad_sum": rejected,
        "clamped_units": [[c, y] for (c, y), f in zip(keys, clamped) if f],
    }
    return Panel.from_arrays(keys, S, inc, clamped, None, provenance)


def load_covariates(path, panel: Panel, schema: Iterable[str] = COVARIATE_SCHEMA, delimiter: str = ",") -> Panel:
    """Left-join long-form covariates onto ``panel``'s units."""
    schema = tuple(schema)
    path = Path(path)
    df = _read_table(path, delimiter, ["country", "year", "variable", "value"])
    problems: List[str] = []
    var = df["variable"].str.strip()
    unknown = sorted(set(var) - set(schema))
    if unknown:
        raise InputError(f"{path}: unknown covariate key(s) {unknown}; schema is {list(schema)}")
    year, _ = _numeric(df, "year", problems, path, integer=True)
    value, _ = _numeric(df, "value", problems, path)
    binary = (var == "dd_binary").to_numpy() & ~np.isnan(value)
    for i in np.flatnonzero(binary & ~np.isin(value, (0.0, 1.0)))[:1000]:
        problems.append(f"{path}:{i + 2}: dd_binary must be 0 or 1, got {df['value'].iloc[i]!r}")
    if problems:
        raise InputError(f"{path}: {len(problems)} invalid field(s)", problems)
    table = pd.DataFrame({"country": df["country"].str.strip(), "year": year.astype(int), "variable": var, "value": value})
    dup = table.duplicated(["country", "year", "variable"], keep=False)
    if dup.any():
        rows = [f"{path}:{i + 2}: duplicate {table.country[i]}/{table.year[i]}/{table.variable[i]}"
                for i in np.flatnonzero(dup.to_numpy())[:50]]
        raise InputError(f"{path}: duplicate (country, year, variable) rows", rows)

    index = {k: i for i, k in enumerate(panel.keys)}
    rows = np.array([index.get((c, y), -1) for c, y in zip(table.country, table.year)], dtype=int)
    merged = {}
    for v in sorted(set(var)):
        arr = panel.covariate(v)
        sel = (table.variable.to_numpy() == v) & (rows >= 0)
        arr[rows[sel]] = table.value.to_numpy()[sel]
        merged[v] = arr
    out = panel.with_covariates(merged)
    # fresh list: the input panel's provenance must not change
    out.provenance["sources"] = list(out.provenance.get("sources", [])) + [
        {"path": str(path), "sha256": file_digest(path), "rows": int(len(df)),
         "unmatched_rows": int((rows < 0).sum())}
    ]
    return out


# ---------------------------------------------------------------------------
# outliers


@dataclass(frozen=True)
class OutlierReport:
    threshold_sd: float
    excluded_units: Tuple[Tuple[str, int, str], ...] = ()
    untested_countries: Tuple[str, ...] = ()

    @property
    def excluded_countries(self) -> List[str]:
        return sorted({c for c, _, _ in self.excluded_units})


def filter_outliers(panel: Panel, threshold_sd: float = 5.0) -> Tuple[Panel, OutlierReport]:
    """Drop every country having a share more than ``threshold_sd`` SDs from its own mean.

    Per country and percentile, the mean and sample SD are taken across the
    country's years. Single-year countries cannot be tested and are kept.
    """
    if not threshold_sd > 0:
        raise DomainError("threshold_sd must be positive")
    S = panel.share_matrix()
    countries = panel.country_array()
    years = panel.year_array()
    codes, uniq = pd.factorize(countries, sort=True)
    excluded, untested = [], []
    drop = np.zeros(len(panel), bool)
    for ci, c in enumerate(uniq):
        rows = np.flatnonzero(codes == ci)
        if rows.size < 2:
            untested.append(c)
            logger.info("outlier test skipped for %s: single year", c)
            continue
        block = S[rows]
        mu = block.mean(axis=0)
        sd = block.std(axis=0, ddof=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(sd > 0, np.abs(block - mu) / sd, 0.0)
        if np.max(z) > threshold_sd:
            worst = np.unravel_index(np.argmax(z), z.shape)
            trigger = f"percentile {worst[1] + 1} share in {years[rows[worst[0]]]} is {z[worst]:.2f} SD from country mean"
            for r in rows:
                excluded.append((str(c), int(years[r]), trigger))
            drop[rows] = True
    report = OutlierReport(float(threshold_sd), tuple(excluded), tuple(untested))
    return panel.subset(~drop), report


# ---------------------------------------------------------------------------
# binary cache

CACHE_MAGIC = b"MIDCLSP\x00"
CACHE_VERSION = 1
_HEADER = struct.Struct("<8sHHIII")
_NAME_BYTES = 16


def _record_dtype(n_cov):
    return np.dtype([
        ("country", f"S{_NAME_BYTES}"),
        ("year", "<i4"),
        ("flags", "u1"),
        ("pad", "V3"),
        ("shares", "<f8", (N_PERCENTILES,)),
        ("incomes", "<f8", (N_PERCENTILES,)),
        ("cov", "<f8", (n_cov,)),
    ])


def cache_store(panel: Panel, path) -> Path:
    """Write ``panel`` to a single versioned binary file (see docs/FORMATS.md)."""
    path = Path(path)
    cov_keys = sorted(panel.covariates)
    prov = json.dumps(panel.provenance, sort_keys=True, default=str).encode("utf-8")
    rec = np.zeros(len(panel), dtype=_record_dtype(len(cov_keys)))
    for i, (c, y) in enumerate(panel.keys):
        raw = c.encode("utf-8")
        if len(raw) > _NAME_BYTES:
            raise DomainError(f"country code {c!r} longer than {_NAME_BYTES} bytes")
        rec["country"][i] = raw
    rec["year"] = panel.year_array()
    rec["flags"] = panel.clamped_flags().astype(np.uint8) | (np.all(np.isfinite(panel.income_matrix()), axis=1) << 1).astype(np.uint8)
    rec["shares"] = panel.share_matrix()
    rec["incomes"] = panel.income_matrix()
    if cov_keys:
        rec["cov"] = np.column_stack([panel.covariates[k] for k in cov_keys])
    body = bytearray(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, 0, len(panel), len(cov_keys), len(prov)))
    for k in cov_keys:
        body += k.encode("utf-8").ljust(_NAME_BYTES, b"\0")
    body += prov
    body += rec.tobytes()
    body += hashlib.sha256(body).digest()
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(bytes(body))
    tmp.replace(path)
    return path


def cache_load(path) -> Panel:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size + 32:
        raise IntegrityError(f"{path}: truncated cache file")
    magic, version, _, n_units, n_cov, prov_len = _HEADER.unpack_from(data)
    if magic != CACHE_MAGIC:
        raise IntegrityError(f"{path}: not a midclass cache (bad magic)")
    if version != CACHE_VERSION:
        raise IntegrityError(f"{path}: cache version {version} unsupported (expected {CACHE_VERSION}); rebuild it")
    if hashlib.sha256(data[:-32]).digest() != data[-32:]:
        raise IntegrityError(f"{path}: checksum mismatch, cache is corrupted")
    off = _HEADER.size
    cov_keys = [data[off + i * _NAME_BYTES: off + (i + 1) * _NAME_BYTES].rstrip(b"\0").decode() for i in range(n_cov)]
    off += n_cov * _NAME_BYTES
    prov = json.loads(data[off: off + prov_len].decode("utf-8"))
    off += prov_len
    dt = _record_dtype(n_cov)
    if len(data) - 32 - off != n_units * dt.itemsize:
        raise IntegrityError(f"{path}: record block has the wrong length")
    rec = np.frombuffer(data, dtype=dt, count=n_units, offset=off)
    keys = [(c.decode("utf-8"), int(y)) for c, y in zip(rec["country"], rec["year"])]
    cov = {k: rec["cov"][:, j].copy() for j, k in enumerate(cov_keys)}
    return Panel.from_arrays(keys, rec["shares"].copy(), rec["incomes"].copy(), (rec["flags"] & 1).astype(bool), cov, prov)
