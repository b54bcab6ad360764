from __future__ import annotations

import logging

import numpy as np
import pandas as pd
import pytest

from midclass.data_io import (
    CACHE_MAGIC,
    FormatSpec,
    Panel,
    cache_load,
    cache_store,
    filter_outliers,
    load_covariates,
    load_shares,
)
from midclass.distribution import PercentileDistribution
from midclass.errors import InputError, IntegrityError
from midclass.synthetic import write_covariates_csv, write_shares_csv

from conftest import random_shares


@pytest.fixture
def four_units(rng):
    return {(c, y): random_shares(rng) for c in ("AAA", "BBB") for y in (2000, 2001)}


def test_load_fixture(write_long_csv, four_units):
    panel = load_shares(write_long_csv(four_units))
    assert len(panel) == 4
    for k, s in four_units.items():
        np.testing.assert_allclose(panel[k].shares, s, atol=1e-15)
    assert panel.provenance["share_scale"] == "fraction"


def test_percent_scale_detected(write_long_csv, four_units):
    panel = load_shares(write_long_csv(four_units, percent=True))
    assert panel.provenance["share_scale"] == "percent"
    np.testing.assert_allclose(panel[("AAA", 2000)].shares, four_units[("AAA", 2000)], atol=1e-14)


def test_incomplete_unit_dropped_with_warning(tmp_path, write_long_csv, four_units, caplog):
    path = write_long_csv(four_units)
    df = pd.read_csv(path)
    df = df.drop(df.index[(df.country == "BBB") & (df.year == 2001) & (df.percentile == 37)])
    df.to_csv(path, index=False)
    with caplog.at_level(logging.WARNING):
        panel = load_shares(path)
    assert len(panel) == 3 and ("BBB", 2001) not in panel
    assert "99 of 100" in caplog.text


def test_malformed_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("country,yr,percentile,share\nA,2000,1,0.01\n")
    with pytest.raises(InputError, match="malformed header"):
        load_shares(p)


def test_non_numeric_fields_collected(write_long_csv, four_units):
    path = write_long_csv(four_units)
    df = pd.read_csv(path, dtype=str)
    df.loc[3, "share"] = "abc"
    df.loc[250, "year"] = "20x1"
    df.to_csv(path, index=False)
    with pytest.raises(InputError) as exc:
        load_shares(path)
    assert len(exc.value.problems) == 2
    assert ":5:" in exc.value.problems[0] or ":5:" in exc.value.problems[1]


def test_duplicate_rows_rejected(write_long_csv, four_units):
    dup = {"country": "AAA", "year": 2000, "percentile": 5, "share": 0.01}
    with pytest.raises(InputError, match="duplicate"):
        load_shares(write_long_csv(four_units, extra_rows=[dup]))


def test_bad_sum_unit_dropped(write_long_csv, four_units):
    units = dict(four_units)
    units[("AAA", 2001)] = units[("AAA", 2001)] * 1.01
    panel = load_shares(write_long_csv(units))
    assert ("AAA", 2001) not in panel
    assert panel.provenance["dropped_bad_sum"][0][:2] == ["AAA", 2001]


def test_negative_share_clamped(write_long_csv, four_units):
    s = four_units[("AAA", 2000)].copy()
    s[1] += s[0] + 1e-4
    s[0] = -1e-4
    four_units[("AAA", 2000)] = s
    panel = load_shares(write_long_csv(four_units))
    assert panel[("AAA", 2000)].clamped
    assert panel[("AAA", 2000)].shares[0] == 0.0
    assert panel.provenance["clamped_units"] == [["AAA", 2000]]


def test_loading_is_idempotent(write_long_csv, four_units):
    path = write_long_csv(four_units)
    assert load_shares(path) == load_shares(path)


@pytest.fixture
def covariate_file(tmp_path):
    def _write(rows):
        p = tmp_path / "cov.csv"
        pd.DataFrame(rows, columns=["country", "year", "variable", "value"]).to_csv(p, index=False)
        return p

    return _write


def test_covariates_left_join(toy_panel, covariate_file):
    p = covariate_file([("AAA", 2000, "gdp_pc", 1000.0), ("BBB", 2001, "gdp_pc", 2000.0), ("ZZZ", 2000, "gdp_pc", 5.0)])
    merged = load_covariates(p, toy_panel)
    g = merged.covariate("gdp_pc")
    assert np.isnan(g).sum() == 2
    assert merged.provenance["sources"][-1]["unmatched_rows"] == 1
    assert "sources" not in toy_panel.provenance


def test_unknown_covariate_key(toy_panel, covariate_file):
    with pytest.raises(InputError, match="gdp_growth"):
        load_covariates(covariate_file([("AAA", 2000, "gdp_growth", 1.0)]), toy_panel)


def test_duplicate_covariates(toy_panel, covariate_file):
    rows = [("AAA", 2000, "polity", 3.0), ("AAA", 2000, "polity", 4.0)]
    with pytest.raises(InputError, match="duplicate"):
        load_covariates(covariate_file(rows), toy_panel)


def test_dd_binary_domain(toy_panel, covariate_file):
    rows = [("AAA", 2000, "dd_binary", 1.0), ("AAA", 2001, "dd_binary", 2.0), ("BBB", 2000, "dd_binary", 0.5)]
    with pytest.raises(InputError) as exc:
        load_covariates(covariate_file(rows), toy_panel)
    assert len(exc.value.problems) == 2


def _panel_with_outlier(rng, n_years=40):
    keys, rows = [], []
    for c in ("A", "B", "C"):
        base = random_shares(rng)
        for y in range(n_years):
            s = base * np.exp(rng.normal(0, 0.01, 100))
            keys.append((c, 1980 + y))
            rows.append(s / s.sum())
    S = np.array(rows)
    S[45] = S[45] * np.r_[np.ones(99), 1.6]  # country B, one year with a swollen top share
    S[45] /= S[45].sum()
    return Panel.from_arrays(keys, S)


def test_outlier_filter_excludes_whole_country(rng):
    panel = _panel_with_outlier(rng)
    kept, report = filter_outliers(panel, 5)
    assert report.excluded_countries == ["B"]
    assert len(kept) == 80
    assert "SD from country mean" in report.excluded_units[0][2]


def test_outlier_filter_infinite_threshold_is_identity(rng):
    panel = _panel_with_outlier(rng)
    kept, report = filter_outliers(panel, np.inf)
    assert kept == panel and not report.excluded_units


def test_single_year_country_untested(rng):
    panel = Panel.from_arrays([("A", 2000), ("B", 2000), ("B", 2001)], random_shares(rng, 3))
    kept, report = filter_outliers(panel, 0.1)
    assert "A" in report.untested_countries
    assert ("A", 2000) in kept


def test_homogeneous_panel_keeps_all(small_panel):
    kept, report = filter_outliers(small_panel, 5)
    assert len(kept) == len(small_panel)


def test_cache_round_trip_bit_exact(tmp_path, small_panel):
    p = cache_store(small_panel, tmp_path / "p.mcp")
    back = cache_load(p)
    assert back == small_panel
    assert back.share_matrix().tobytes() == small_panel.share_matrix().tobytes()
    assert back.income_matrix().tobytes() == small_panel.income_matrix().tobytes()
    for k, v in small_panel.covariates.items():
        assert back.covariate(k).tobytes() == v.tobytes()
    assert back.provenance == small_panel.provenance
    # storing again yields identical bytes
    assert cache_store(back, tmp_path / "q.mcp").read_bytes() == p.read_bytes()


def test_cache_header(tmp_path, toy_panel):
    data = cache_store(toy_panel, tmp_path / "p.mcp").read_bytes()
    assert data[:8] == CACHE_MAGIC
    assert int.from_bytes(data[8:10], "little") == 1
    assert int.from_bytes(data[12:16], "little") == 4


@pytest.mark.parametrize("where", ["magic", "version", "body", "truncate"])
def test_cache_corruption_detected(tmp_path, toy_panel, where):
    p = cache_store(toy_panel, tmp_path / "p.mcp")
    data = bytearray(p.read_bytes())
    if where == "magic":
        data[0] ^= 0xFF
    elif where == "version":
        data[8] = 9
    elif where == "body":
        data[len(data) // 2] ^= 0x01
    else:
        data = data[:-40]
    p.write_bytes(bytes(data))
    with pytest.raises(IntegrityError):
        cache_load(p)


def test_synthetic_writers_round_trip(tmp_path, small_panel):
    s = write_shares_csv(small_panel, tmp_path / "s.csv")
    c = write_covariates_csv(small_panel, tmp_path / "c.csv")
    back = load_covariates(c, load_shares(s))
    np.testing.assert_allclose(back.share_matrix(), small_panel.share_matrix(), atol=1e-15)
    np.testing.assert_allclose(back.covariate("gdp_pc"), small_panel.covariate("gdp_pc"), rtol=1e-15)


def test_panel_is_immutable(small_panel):
    with pytest.raises(ValueError):
        small_panel.share_matrix()[0, 0] = 1.0
    assert small_panel.drop_countries(small_panel.countries()[:1]) is not small_panel


def test_custom_delimiter(tmp_path, four_units, write_long_csv):
    path = write_long_csv(four_units)
    semi = tmp_path / "semi.csv"
    semi.write_text(path.read_text().replace(",", ";"))
    panel = load_shares(semi, FormatSpec(delimiter=";"))
    assert len(panel) == 4


def test_unit_lookup(toy_panel):
    d = toy_panel[("AAA", 2000)]
    assert isinstance(d, PercentileDistribution)
    with pytest.raises(KeyError):
        toy_panel[("AAA", 1999)]
