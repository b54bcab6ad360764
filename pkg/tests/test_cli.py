from __future__ import annotations

import json
import subprocess
import sys

import pandas as pd
import pytest

from midclass.cli import main

TABLE_SUFFIXES = (".csv", ".json", ".svg")


def outputs(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())
            if p.suffix in TABLE_SUFFIXES and p.name != "manifest.json"}


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--outdir", str(d), "--countries", "20", "--first-year", "1985", "--last-year", "2015"]) == 0
    return d


@pytest.fixture(scope="module")
def cache_file(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("ingest")
    target = out / "panel.mcp"
    rc = main(["ingest", "--input", str(synth_dir / "shares.csv"), "--covariates", str(synth_dir / "covariates.csv"),
               "--output", str(target), "--outdir", str(out)])
    assert rc == 0
    return target


def test_simulate_outputs(tmp_path):
    assert main(["simulate", "--outdir", str(tmp_path), "--seed", "42"]) == 0
    soc = pd.read_csv(tmp_path / "societies.csv")
    assert len(soc) == 100
    assert (tmp_path / "scatter_20_21.svg").exists()
    stats = pd.read_csv(tmp_path / "interval_stats.csv").set_index(["p", "q"])
    assert stats.loc[(20, 21), "slope"] < 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["seed"] == 42 and "societies.csv" in man["outputs"]
    mirror = json.loads((tmp_path / "societies.json").read_text())
    assert mirror["columns"] == list(soc.columns) and len(mirror["rows"]) == 100


def test_simulate_paper_literal(tmp_path):
    assert main(["simulate", "--outdir", str(tmp_path), "--paper-literal"]) == 0
    assert "gini_paper_literal" in pd.read_csv(tmp_path / "societies.csv").columns
    assert (tmp_path / "formula_check.csv").exists()


def test_simulate_infeasible_config_is_input_error(tmp_path):
    rc = main(["simulate", "--outdir", str(tmp_path), "--gini-mean", "0.05", "--gini-sd", "0.01",
               "--nu-lo", "0.5", "--nu-hi", "0.6"])
    assert rc == 2


def test_betamap_coarse(tmp_path):
    assert main(["betamap", "--simulate", "--grid-step", "5", "--outdir", str(tmp_path)]) == 0
    assert len(pd.read_csv(tmp_path / "betamap.csv")) == 210
    assert (tmp_path / "betamap.svg").read_text().startswith("<svg")


def test_midclass_simulated(tmp_path):
    assert main(["midclass", "--simulate", "--M", "30", "--outdir", str(tmp_path)]) == 0
    row = pd.read_csv(tmp_path / "midclass.csv").iloc[0]
    assert abs(row.p - 66) <= 1 and row.q - row.p == 30


def test_midclass_per_country(tmp_path, cache_file):
    assert main(["midclass", "--cache", str(cache_file), "--per-country", "--outdir", str(tmp_path)]) == 0
    summ = pd.read_csv(tmp_path / "summary.csv").iloc[0]
    assert 1 <= summ.mean_initial <= 49
    assert pd.read_csv(tmp_path / "histogram.csv")["count"].sum() == summ.n_countries


def test_midclass_cross_section(tmp_path, cache_file):
    rc = main(["midclass", "--cache", str(cache_file), "--cross-section-year", "2000", "--measure", "atkinson",
               "--outdir", str(tmp_path)])
    assert rc == 0


def test_timeseries(tmp_path, cache_file):
    assert main(["timeseries", "--cache", str(cache_file), "--range", "1985,2015", "--outdir", str(tmp_path)]) == 0
    ts = pd.read_csv(tmp_path / "timeseries.csv")
    assert set(ts["year"]) == set(range(1985, 2016))
    dec = pd.read_csv(tmp_path / "decreasing.csv")
    assert (dec.n_decreasing <= dec.n_countries).all()


def test_democracy_compare_marks_separator(tmp_path, cache_file):
    assert main(["democracy", "--cache", str(cache_file), "--compare", "--start", "1985", "--end", "2015",
                 "--outdir", str(tmp_path)]) == 0
    df = pd.read_csv(tmp_path / "compare.csv")
    assert len(df) == 7
    assert df["separator_after"].tolist() == [False, False, True, False, False, False, False]


def test_democracy_compare_without_incomes(tmp_path, tmp_path_factory):
    syn = tmp_path_factory.mktemp("bare")
    main(["synth", "--outdir", str(syn), "--countries", "15", "--first-year", "1985", "--last-year", "2015",
          "--no-incomes"])
    rc = main(["democracy", "--input", str(syn / "shares.csv"), "--covariates", str(syn / "covariates.csv"),
               "--compare", "--start", "1985", "--end", "2015", "--outdir", str(tmp_path)])
    assert rc == 0
    df = pd.read_csv(tmp_path / "compare.csv")
    assert bool(df.loc[1, "skipped"]) and "mean incomes" in df.loc[1, "note"]


def test_democracy_sweep(tmp_path, cache_file):
    assert main(["democracy", "--cache", str(cache_file), "--sweep", "--start", "1985", "--end", "2015",
                 "--outdir", str(tmp_path)]) == 0
    sw = pd.read_csv(tmp_path / "sweep.csv")
    assert len(sw) == 100 and {"ci_lo", "ci_hi"} <= set(sw.columns)
    meta = json.loads((tmp_path / "sweep.json").read_text())["meta"]
    assert meta["ci_level"] == 0.9 and meta["multiple_testing_correction"] == "none"


def test_exit_codes(tmp_path, cache_file):
    bad = tmp_path / "bad.csv"
    bad.write_text("country,year,percentile\nA,1,1\n")
    assert main(["betamap", "--input", str(bad), "--outdir", str(tmp_path / "o1")]) == 2
    broken = tmp_path / "broken.mcp"
    data = bytearray(cache_file.read_bytes())
    data[100] ^= 1
    broken.write_bytes(bytes(data))
    assert main(["betamap", "--cache", str(broken), "--outdir", str(tmp_path / "o2")]) == 4
    assert main(["midclass", "--cache", str(cache_file), "--M", "50", "--p-bounds", "0,70",
                 "--outdir", str(tmp_path / "o3")]) == 3


def test_cache_dir_env(tmp_path, synth_dir, monkeypatch):
    monkeypatch.setenv("MIDCLASS_CACHE_DIR", str(tmp_path / "cache"))
    args = ["betamap", "--input", str(synth_dir / "shares.csv"), "--grid-step", "10"]
    assert main(args + ["--outdir", str(tmp_path / "a")]) == 0
    assert len(list((tmp_path / "cache").glob("*.mcp"))) == 1
    assert main(args + ["--outdir", str(tmp_path / "b")]) == 0
    assert outputs(tmp_path / "a") == outputs(tmp_path / "b")


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "midclass.cli", "simulate", "--n", "20", "--outdir", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert len(pd.read_csv(tmp_path / "societies.csv")) == 20
