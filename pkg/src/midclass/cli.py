"""``midclass`` command-line driver.

Every command writes delimited tables with a JSON mirror, SVG plots and a
``manifest.json`` into ``--outdir``. Exit codes: 0 success, 2 input error,
3 numerical or degenerate-design error, 4 integrity error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from . import __version__
from .data_io import FormatSpec, Panel, cache_load, cache_store, file_digest, filter_outliers, load_covariates, load_shares
from .democracy import (
    DEFAULT_DEFINITIONS,
    DEMOCRACY_KEYS,
    MidclassDef,
    build_five_year_panel,
    midclass_comparison,
    midclass_values,
    percentile_sweep,
    sweep_summary,
)
from .distribution import N_PERCENTILES, relative_income_share_rows
from .errors import (
    ConfigurationError,
    DegenerateDesignError,
    DomainError,
    InputError,
    IntegrityError,
    UnsupportedOperationError,
)
from .frontier import (
    beta_map,
    country_specific_classes,
    m_size_sweep,
    refine_continuous,
    solve_middle_class,
    zero_frontier,
)
from .inequality import DEFAULT_EPSILON, InequalityMeasure
from .pareto import (
    DEFAULT_SEED,
    MonteCarloConfig,
    SocietySample,
    gini_paper_literal,
    paper_literal_report,
    sample_societies,
    share_exponent_paper_literal,
)
from .regression import ols
from .svg import PALETTE, Chart, beta_triangle, dot_whisker, share_scatter
from .synthetic import SyntheticConfig, plant_democracy, synthetic_panel, write_covariates_csv, write_shares_csv

logger = logging.getLogger("midclass")

CACHE_ENV = "MIDCLASS_CACHE_DIR"
FLOAT_FMT = "%.12g"

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_INTEGRITY = 0, 2, 3, 4


# ---------------------------------------------------------------------------
# output plumbing


class Outputs:
    """Collects files written by one command and emits the run manifest."""

    def __init__(self, outdir, command: str, args: argparse.Namespace):
        self.dir = Path(outdir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.args = args
        self.files: List[str] = []
        self.inputs: Dict[str, str] = {}
        self.notes: List[str] = []

    def table(self, df: pd.DataFrame, name: str, meta: Optional[dict] = None) -> Path:
        path = self.dir / f"{name}.csv"
        df.to_csv(path, index=False, float_format=FLOAT_FMT, na_rep="", lineterminator="\n")
        records = [{k: _jsonable(v) for k, v in row.items()} for row in df.to_dict(orient="records")]
        mirror = {"table": name, "columns": list(df.columns), "rows": records}
        if meta:
            mirror["meta"] = meta
        (self.dir / f"{name}.json").write_text(json.dumps(mirror, indent=1, sort_keys=False) + "\n", encoding="utf-8")
        self.files += [path.name, f"{name}.json"]
        return path

    def svg(self, chart: Chart, name: str) -> Path:
        path = chart.save(self.dir / f"{name}.svg")
        self.files.append(path.name)
        return path

    def note(self, msg: str):
        logger.warning(msg)
        self.notes.append(msg)

    def manifest(self) -> Path:
        flags = {k: _jsonable(v) for k, v in sorted(vars(self.args).items()) if k != "func"}
        epoch = os.environ.get("SOURCE_DATE_EPOCH")
        now = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
        doc = {
            "command": self.command,
            "flags": flags,
            "seed": getattr(self.args, "seed", None),
            "inputs": self.inputs,
            "toolkit_version": __version__,
            "timestamp": now.strftime("%Y-%m-%dT%H:%M:%SZ"),
            "notes": self.notes,
            "outputs": {f: _sha256(self.dir / f) for f in self.files},
        }
        path = self.dir / "manifest.json"
        path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
        return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return None if math.isnan(v) or math.isinf(v) else float(FLOAT_FMT % v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


# ---------------------------------------------------------------------------
# inputs


def _parse_pair(text: str, cast=int):
    a, b = text.strip().strip("()").split(",")
    return cast(a), cast(b)


def _parse_intervals(text: str):
    return [_parse_pair(t) for t in text.split(";") if t.strip()]


def _measure(args) -> InequalityMeasure:
    return InequalityMeasure(args.measure, args.epsilon)


def _mc_config(args) -> MonteCarloConfig:
    return MonteCarloConfig(args.n, args.gini_mean, args.gini_sd, args.nu_lo, args.nu_hi, args.seed)


def _format_spec(args) -> FormatSpec:
    return FormatSpec(delimiter=args.delimiter, share_scale=args.share_scale, series=args.series)


def _cache_dir() -> Optional[Path]:
    d = os.environ.get(CACHE_ENV)
    return Path(d) if d else None


def load_panel(args, out: Outputs) -> Panel:
    """Panel from ``--cache`` or ``--input`` (+ ``--covariates``), outlier filter applied."""
    if args.cache:
        out.inputs[str(args.cache)] = file_digest(args.cache)
        panel = cache_load(args.cache)
    elif args.input:
        out.inputs[str(args.input)] = file_digest(args.input)
        if args.covariates:
            out.inputs[str(args.covariates)] = file_digest(args.covariates)
        cdir = _cache_dir()
        key = hashlib.sha256(json.dumps([sorted(out.inputs.items()), args.delimiter, args.share_scale,
                                         args.series]).encode()).hexdigest()[:20]
        cached = cdir / f"{key}.mcp" if cdir else None
        if cached is not None and cached.exists():
            panel = cache_load(cached)
        else:
            panel = load_shares(args.input, _format_spec(args))
            if args.covariates:
                panel = load_covariates(args.covariates, panel, delimiter=args.delimiter)
            if cached is not None:
                cdir.mkdir(parents=True, exist_ok=True)
                cache_store(panel, cached)
    else:
        raise InputError("no data: pass --input or --cache (or --simulate where supported)")
    if args.outlier_sd and args.outlier_sd > 0:
        panel, report = filter_outliers(panel, args.outlier_sd)
        rows = pd.DataFrame(list(report.excluded_units), columns=["country", "year", "reason"])
        out.table(rows, "outliers", {"threshold_sd": report.threshold_sd,
                                     "untested_countries": list(report.untested_countries)})
    return panel


def _sample(args, out: Outputs):
    if getattr(args, "simulate", False):
        return SocietySample.from_config(_mc_config(args))
    return load_panel(args, out)


def _default_measure(args, sample):
    # simulated cross-sections regress on the drawn Gini unless told otherwise
    if isinstance(sample, SocietySample) and args.measure == "gini" and not args.computed_gini:
        return "external"
    return _measure(args)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args, out: Outputs):
    cfg = _mc_config(args)
    societies = sample_societies(cfg)
    sample = SocietySample(societies, f"pareto-mc-seed{cfg.seed}-n{cfg.n_societies}")
    tab = pd.DataFrame({
        "society": np.arange(len(societies)),
        "nu": sample.nu,
        "alpha": sample.alpha,
        "gini": sample.gini,
    })
    if args.paper_literal:
        tab["gini_paper_literal"] = [gini_paper_literal(s) for s in societies]
        tab["exponent_paper_literal"] = share_exponent_paper_literal(sample.gini, sample.nu)
        out.note("paper-literal columns use nu + (1 + nu)/(2 alpha - 1) and (1 - G)/(1 + G + 2 nu)")
        rep = pd.DataFrame([paper_literal_report(s) for s in societies[: min(5, len(societies))]])
        out.table(rep, "formula_check")
    out.table(tab, "societies")
    C = sample.cumulative_shares()
    S = np.diff(C, axis=1)
    long = pd.DataFrame({
        "country": np.repeat([f"S{i:04d}" for i in range(len(societies))], N_PERCENTILES),
        "year": 0,
        "percentile": np.tile(np.arange(1, N_PERCENTILES + 1), len(societies)),
        "share": S.ravel(),
    })
    out.table(long, "shares")
    rows = []
    for p, q in _parse_intervals(args.intervals):
        y = sample.interval_shares(p, q)
        fit = ols(y, sample.gini)
        rows.append({"p": p, "q": q, "mean_share": y.mean(), "cv": y.std(ddof=1) / y.mean(),
                     "slope": fit.slope, "se": fit.std_errors[1], "r2": fit.r_squared,
                     "corr": float(np.corrcoef(y, sample.gini)[0, 1])})
        out.svg(share_scatter(sample.gini, y, p, q, fit), f"scatter_{p}_{q}")
    out.table(pd.DataFrame(rows), "interval_stats")


def cmd_betamap(args, out: Outputs):
    sample = _sample(args, out)
    measure = _default_measure(args, sample)
    surface = beta_map(sample, measure, grid_step=args.grid_step)
    out.table(surface.to_frame(), "betamap", {"measure": str(measure), "sample": surface.sample_id,
                                              "n_obs": surface.n_obs})
    front = zero_frontier(surface)
    out.table(pd.DataFrame(front, columns=["p", "q_star"]), "frontier")
    out.svg(beta_triangle(surface, front), "betamap")


def _solution_row(sol, **extra):
    return {**extra, "p": sol.interval.p, "q": sol.interval.q, "M": sol.size_M, "objective": sol.objective,
            "objective_value": sol.objective_value, "beta": sol.beta, "r2": sol.r_squared}


def cmd_midclass(args, out: Outputs):
    sample = _sample(args, out)
    measure = _default_measure(args, sample)
    p_bounds = _parse_pair(args.p_bounds) if args.p_bounds else None
    if args.per_country:
        if isinstance(sample, SocietySample):
            raise InputError("--per-country needs a country panel, not --simulate")
        objective = args.objective if args.objective != "beta2" else "r2:1"
        cc = country_specific_classes(sample, measure, args.M, objective, p_bounds)
        exclude = [c for c in (args.exclude or "").split(",") if c]
        out.table(pd.DataFrame([_solution_row(s, country=c) for c, s in sorted(cc.solutions.items())]),
                  "country_classes")
        hist = cc.histogram(exclude)
        out.table(pd.DataFrame(sorted(hist.items()), columns=["initial_percentile", "count"]), "histogram")
        summ = pd.DataFrame([{"M": args.M, "n_countries": int(sum(hist.values())),
                              "mean_initial": cc.mean_initial(exclude), "share_at_49": cc.fraction_at(49, exclude),
                              "n_skipped": len(cc.skipped)}])
        out.table(summ, "summary", {"excluded": exclude, "skipped": [list(s) for s in cc.skipped]})
        counts = np.array(sorted(hist.items()), dtype=float).reshape(-1, 2)
        ch = Chart(title=f"initial percentile, M={args.M}", xlabel="p", ylabel="countries")
        ch.whiskers(counts[:, 0], np.zeros(len(counts)), counts[:, 1], color=PALETTE[0])
        out.svg(ch, "histogram")
        return
    if args.cross_section_year is not None:
        if isinstance(sample, SocietySample):
            raise InputError("--cross-section-year needs a country panel")
        sample = sample.select(years=[args.cross_section_year])
        if len(sample) < 3:
            raise InputError(f"only {len(sample)} units in {args.cross_section_year}")
    sol = solve_middle_class(sample, measure, args.M, args.objective, p_bounds)
    rows = [_solution_row(sol, measure=str(measure))]
    out.table(pd.DataFrame(rows), "midclass")
    if args.refine:
        refs = []
        for deg in (1, 2, 5):
            p = refine_continuous(sample, measure, args.M, "r2", degree=deg, p_bounds=p_bounds)
            refs.append({"degree": deg, "p": p, "q": p + args.M})
        out.table(pd.DataFrame(refs), "refined")
    if args.m_sweep:
        lo, hi = _parse_pair(args.m_sweep)
        sw = m_size_sweep(sample, measure, lo, hi, args.objective)
        out.table(pd.DataFrame([_solution_row(s) for s in sw.solutions]), "m_sweep",
                  {"common_percentiles": list(sw.common_percentiles)})
        ch = Chart(title="size sweep", xlabel="M", ylabel="percentile")
        ms = np.array([s.size_M for s in sw.solutions], float)
        ch.line(ms, [s.interval.p for s in sw.solutions], label="p")
        ch.line(ms, [s.interval.q for s in sw.solutions], color=PALETTE[1], label="q")
        out.svg(ch, "m_sweep")


def cmd_timeseries(args, out: Outputs):
    panel = load_panel(args, out)
    y0, y1 = _parse_pair(args.range)
    panel = panel.select(years=range(y0, y1 + 1))
    defs = [MidclassDef.parse(t) for t in args.classes.split(";") if t.strip()]
    S = panel.share_matrix()
    C = panel.cumulative_shares()
    years = panel.year_array()
    countries = panel.country_array()
    series, changes = [], []
    ch = Chart(title="middle-class share", xlabel="year", ylabel="share")
    for k, d in enumerate(defs):
        if d.kind == "interval":
            v = C[:, d.q] - C[:, d.p]
        elif d.kind == "relative_income":
            v = relative_income_share_rows(S, panel.income_matrix(), d.lo, d.hi)
            if np.all(np.isnan(v)):
                out.note(f"{d.label} skipped: mean incomes unavailable")
                continue
        elif d.kind == "percentile":
            v = S[:, d.k - 1]
        else:
            raise InputError("timeseries takes intervals, rel:lo,hi or pct:k classes")
        df = pd.DataFrame({"country": countries, "year": years, "v": v}).dropna()
        avg = df.groupby("year", sort=True)["v"].agg(["mean", "count"]).reset_index()
        for _, r in avg.iterrows():
            series.append({"class": d.label, "year": int(r["year"]), "mean_share": r["mean"], "n_countries": int(r["count"])})
        ch.line(avg["year"].to_numpy(float), avg["mean"].to_numpy(), color=PALETTE[k % len(PALETTE)], label=d.label)
        first = df[df.year == y0].set_index("country")["v"]
        last = df[df.year == y1].set_index("country")["v"]
        both = first.index.intersection(last.index)
        dec = int((last[both] < first[both]).sum())
        changes.append({"class": d.label, "first_year": y0, "last_year": y1, "n_countries": len(both),
                        "n_decreasing": dec, "fraction_decreasing": dec / len(both) if len(both) else float("nan")})
    out.table(pd.DataFrame(series), "timeseries")
    out.table(pd.DataFrame(changes), "decreasing")
    out.svg(ch, "timeseries")


def cmd_democracy(args, out: Outputs):
    panel = load_panel(args, out)
    table = build_five_year_panel(panel, args.start, args.end)
    meta = {"n_rows": len(table.frame), "n_dropped": table.n_dropped, "ci_level": 0.90,
            "multiple_testing_correction": "none"}
    if args.sweep:
        sw = percentile_sweep(table, args.democracy, placebo_seed=args.placebo_seed)
        summary = sweep_summary(sw)
        meta.update(summary=summary, placebo_seed=args.placebo_seed,
                    weights="coefficient magnitude (weighted_positive_percentile)")
        out.table(sw, "sweep", meta)
        ch = Chart(title=f"percentile sweep: {args.democracy}", xlabel="percentile", ylabel="coefficient")
        ch.hline(0.0)
        ch.whiskers(sw["percentile"], sw["ci_lo"], sw["ci_hi"])
        ch.scatter(sw["percentile"], sw["coef"], color=PALETTE[1])
        out.svg(ch, "sweep")
    if args.compare:
        defs = [MidclassDef.parse(t) for t in args.definitions.split(";")] if args.definitions else list(DEFAULT_DEFINITIONS)
        runs = midclass_comparison(table, args.democracy, defs)
        rows = []
        for pos, r in enumerate(runs):
            c, se, lo, hi = r.coefficient()
            nxt = runs[pos + 1].definition.group if pos + 1 < len(runs) else None
            rows.append({"order": pos + 1, "definition": r.definition.label, "group": r.definition.group,
                         "separator_after": r.definition.group == "standard" and nxt == "endogenous",
                         "coef": c, "se": se, "ci_lo": lo, "ci_hi": hi,
                         "n_obs": r.fit.n_obs if r.fit else 0, "n_countries": r.n_countries,
                         "n_periods": r.n_periods, "skipped": r.skipped, "note": r.note})
            if r.note:
                out.note(f"{r.definition.label}: {r.note}")
        df = pd.DataFrame(rows)
        out.table(df, "compare", meta)
        sep = [i + 1 for i, f in enumerate(df["separator_after"]) if f]
        out.svg(dot_whisker(df["definition"].tolist(), df["coef"], df["ci_lo"], df["ci_hi"],
                            sep[0] if sep else None, title=f"middle-class definitions: {args.democracy}"), "compare")
    if not (args.sweep or args.compare):
        raise InputError("democracy needs --sweep and/or --compare")


def cmd_ingest(args, out: Outputs):
    panel = load_panel(args, out)
    target = Path(args.output)
    cache_store(panel, target)
    out.inputs[str(target)] = file_digest(target)
    summary = pd.DataFrame([{"n_units": len(panel), "n_countries": len(panel.countries()),
                             "first_year": min(panel.years()) if len(panel) else None,
                             "last_year": max(panel.years()) if len(panel) else None,
                             "n_clamped": int(panel.clamped_flags().sum()),
                             "covariates": ";".join(sorted(panel.covariates))}])
    out.table(summary, "ingest")


def cmd_synth(args, out: Outputs):
    cfg = SyntheticConfig(n_countries=args.countries, first_year=args.first_year, last_year=args.last_year,
                          seed=args.seed)
    panel = synthetic_panel(cfg)
    for i, key in enumerate(DEMOCRACY_KEYS[:3]):
        panel = plant_democracy(panel, seed=args.seed + i, key=key)
    if args.no_incomes:
        panel = Panel.from_arrays(panel.keys, panel.share_matrix(), None, None, dict(panel.covariates),
                                  panel.provenance)
    write_shares_csv(panel, out.dir / "shares.csv")
    write_covariates_csv(panel, out.dir / "covariates.csv")
    out.files += ["shares.csv", "covariates.csv"]


# ---------------------------------------------------------------------------
# parser


def _add_data_flags(p: argparse.ArgumentParser, simulate: bool = False):
    g = p.add_argument_group("data")
    g.add_argument("--input", type=Path, help="long percentile-share table")
    g.add_argument("--covariates", type=Path, help="covariate table (country, year, key columns)")
    g.add_argument("--cache", type=Path, help="binary panel cache written by `midclass ingest`")
    g.add_argument("--delimiter", default=",")
    g.add_argument("--share-scale", choices=("auto", "fraction", "percent"), default="auto")
    g.add_argument("--series", default="unspecified", help="declared income series, recorded in provenance")
    g.add_argument("--outlier-sd", type=float, default=5.0, help="0 disables the outlier filter")
    if simulate:
        g.add_argument("--simulate", action="store_true", help="use a Pareto Monte Carlo sample instead of data")
        g.add_argument("--computed-gini", action="store_true",
                       help="with --simulate, regress on the Gini of the discretized shares")
        _add_mc_flags(p)


def _add_mc_flags(p):
    g = p.add_argument_group("Monte Carlo")
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--gini-mean", type=float, default=0.4)
    g.add_argument("--gini-sd", type=float, default=0.05)
    g.add_argument("--nu-lo", type=float, default=0.1)
    g.add_argument("--nu-hi", type=float, default=0.2)


def _add_measure_flags(p):
    p.add_argument("--measure", choices=("gini", "atkinson", "theil", "external"), default="gini")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="Atkinson inequality aversion")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="midclass", description="Inequality-insensitive middle classes.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--outdir", type=Path, default=Path("midclass-out"))
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="Pareto Monte Carlo cross-section")
    _add_mc_flags(p)
    p.add_argument("--intervals", default="20,21;99,100;20,80;40,90;49,99")
    p.add_argument("--paper-literal", action="store_true", help="also report the alternative formula variants")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("betamap", parents=[common], help="beta surface over all intervals")
    _add_data_flags(p, simulate=True)
    _add_measure_flags(p)
    p.add_argument("--grid-step", type=int, default=1)
    p.set_defaults(func=cmd_betamap)

    p = sub.add_parser("midclass", parents=[common], help="solve for the insensitive middle class")
    _add_data_flags(p, simulate=True)
    _add_measure_flags(p)
    p.add_argument("--M", type=int, default=50)
    p.add_argument("--objective", default="beta2", help="beta2 or r2:DEGREE")
    p.add_argument("--p-bounds", help="lo,hi range for the lower bound")
    p.add_argument("--per-country", action="store_true")
    p.add_argument("--exclude", help="comma-separated countries left out of per-country summaries")
    p.add_argument("--cross-section-year", type=int)
    p.add_argument("--refine", action="store_true", help="continuous lower bound for degrees 1, 2 and 5")
    p.add_argument("--m-sweep", help="lo,hi range of sizes")
    p.set_defaults(func=cmd_midclass)

    p = sub.add_parser("timeseries", parents=[common], help="yearly average class shares")
    _add_data_flags(p)
    p.add_argument("--classes", default="48,98;65,95;20,80;rel:0.75,2.0")
    p.add_argument("--range", default="1980,2023")
    p.set_defaults(func=cmd_timeseries)

    p = sub.add_parser("democracy", parents=[common], help="five-year democracy regressions")
    _add_data_flags(p)
    p.add_argument("--democracy", choices=DEMOCRACY_KEYS, default="vdem_polyarchy")
    p.add_argument("--sweep", action="store_true")
    p.add_argument("--compare", action="store_true")
    p.add_argument("--definitions", help="';'-separated, e.g. '20,80;rel:0.75,2.0;country:50;pct:85'")
    p.add_argument("--start", type=int, default=1980)
    p.add_argument("--end", type=int, default=2020)
    p.add_argument("--placebo-seed", type=int, help="replace democracy with seeded noise")
    p.set_defaults(func=cmd_democracy)

    p = sub.add_parser("ingest", parents=[common], help="validate inputs and write a binary cache")
    _add_data_flags(p)
    p.add_argument("--output", required=True, type=Path)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic WID-style fixture")
    p.add_argument("--countries", type=int, default=40)
    p.add_argument("--first-year", type=int, default=1980)
    p.add_argument("--last-year", type=int, default=2020)
    p.add_argument("--no-incomes", action="store_true")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    out = Outputs(args.outdir, args.command, args)
    try:
        args.func(args, out)
    except (InputError, ConfigurationError, FileNotFoundError, UnsupportedOperationError) as exc:
        print(f"midclass: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except IntegrityError as exc:
        print(f"midclass: integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (DegenerateDesignError, DomainError, np.linalg.LinAlgError) as exc:
        print(f"midclass: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out.manifest()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
