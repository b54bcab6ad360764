from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from midclass.data_io import Panel
from midclass.distribution import N_PERCENTILES
from midclass.pareto import MonteCarloConfig, SocietySample
from midclass.synthetic import SyntheticConfig, synthetic_panel


def random_shares(rng, n_rows=None, zeros=0):
    """Sorted Dirichlet shares; ``zeros`` bottom percentiles forced to 0."""
    size = (N_PERCENTILES,) if n_rows is None else (n_rows, N_PERCENTILES)
    s = np.sort(rng.gamma(0.8, 1.0, size), axis=-1)
    if zeros:
        s[..., :zeros] = 0.0
    return s / s.sum(axis=-1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def pareto_sample():
    return SocietySample.from_config(MonteCarloConfig())


@pytest.fixture(scope="session")
def small_panel():
    return synthetic_panel(SyntheticConfig(n_countries=12, first_year=1990, last_year=2010, seed=7))


@pytest.fixture
def write_long_csv(tmp_path):
    """Write a long share table from a dict ``{(country, year): shares}``."""

    def _write(units, name="shares.csv", incomes=None, percent=False, extra_rows=()):
        rows = []
        for (c, y), s in units.items():
            for k in range(N_PERCENTILES):
                row = {"country": c, "year": y, "percentile": k + 1, "share": s[k] * (100 if percent else 1)}
                if incomes is not None:
                    row["average_income"] = incomes[(c, y)][k]
                rows.append(row)
        df = pd.DataFrame(rows)
        if extra_rows:
            df = pd.concat([df, pd.DataFrame(list(extra_rows))], ignore_index=True)
        path = tmp_path / name
        df.to_csv(path, index=False, float_format="%.17g")
        return path

    return _write


@pytest.fixture
def toy_panel(rng):
    units = {}
    for c in ("AAA", "BBB"):
        for y in (2000, 2001):
            from midclass.distribution import PercentileDistribution

            units[(c, y)] = PercentileDistribution(c, y, random_shares(rng))
    return Panel(units)


# ---------------------------------------------------------------------------
# acceptance report: one line per criterion in the terminal summary

_CRITERIA: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, {"title": title, "passed": [], "failed": [], "skipped": []})
    if rep.skipped:
        reason = rep.longrepr[2] if isinstance(rep.longrepr, tuple) else str(rep.longrepr)
        entry["skipped"].append(reason.removeprefix("Skipped: "))
    elif rep.failed:
        entry["failed"].append(item.name)
    else:
        entry["passed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        if e["failed"]:
            status, detail = "FAIL", "failed: " + ", ".join(e["failed"])
        elif e["passed"]:
            status, detail = "PASS", f"checks passed: {len(e['passed'])}"
        else:
            status, detail = "SKIP", e["skipped"][0]
        terminalreporter.write_line(f"criterion {number}: {status}  {e['title']} ({detail})")
