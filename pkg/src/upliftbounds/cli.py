"""Command-line interface: ``upliftbounds {simulate,sweep,bounds,estimate,profit}``.

Settings resolve as built-in defaults < ``--config`` JSON < explicit flags.
Config keys are the long flag names with dashes replaced by underscores; a
``manifest.json`` written by a previous run is accepted as a config too.

Exit codes: 0 success, 1 usage error, 2 data validation error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import secrets
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .core import QUANTITIES, DomainError, Quantity
from .estimation import EstimationReport, SplitSpec, estimation_report, model_covariance_term, run_algorithm_one
from .ingest import (
    CampaignSchema,
    DataValidationError,
    ScoreModelSpec,
    load_campaign_csv,
    read_score_file,
    write_score_file,
)
from .profit import ProfitInputs, profit_report
from .simulation import (
    BENCHMARK_COLUMNS,
    CHURN_POINT,
    SWEEP_AXES,
    BenchmarkProtocol,
    SimulationParams,
    run_benchmark,
    sensitivity_sweep,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3

# settings that change how a run executes but never what it produces;
# they are not embedded in artifacts
EXECUTION_KEYS = ("out", "threads", "config", "figures")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


DEFAULT_SWEEPS = {
    "A": {"grid": [0.1, 0.2, 0.5, 1, 2, 5, 10, 20, 50, 100], "n": 2000, "v": 50, "A": 1.0},
    "N": {"grid": [10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000], "n": 2000, "v": 20, "A": 1.0},
    "v": {"grid": [2, 5, 10, 20, 50, 100, 200, 500, 1000], "n": 1000, "v": 20, "A": 10.0},
}

DEFAULTS = {
    "common": {"seed": None, "out": "out", "threads": os.cpu_count() or 1, "figures": True},
    "simulate": {
        "runs": 5000, "n_range": [10, 10000], "v_range": [5, 50], "A_range": [0.1, 15.0],
        "n_law": "log", "v_law": "log", "A_law": "uniform",
        "strata_bins": 10, "strata_min_runs": 20, "phi_bins": 40,
    },
    "sweep": {"axis": "A", "grid": None, "n": None, "v": None, "A": None,
              "point": list(CHURN_POINT), "replicates": 30},
    "bounds": {"scores": None},
    "estimate": {
        "data": None, "schema": None, "treatment_col": "t", "outcome_col": "y", "id_col": None,
        "delimiter": ",", "categorical": [], "split": "kfold", "folds": 5, "test_fraction": 0.3,
        "balance": True, "ensemble_k": 10, "calibrate": True, "calibration_order": "each",
        "l2": 1.0, "max_iter": 100, "model_cov_replicates": 0,
    },
    "profit": {"report": None, "value": 120.0, "cost": 1.0, "contacted": None,
               "population": None, "uplift": None, "currency": "EUR"},
}


# ---------------------------------------------------------------------------
# parser


def _float_list(s: str) -> list[float]:
    try:
        return [float(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


def _str_list(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = _Parser(add_help=False, argument_default=S, allow_abbrev=False)
    common.add_argument("--seed", type=int, help="master seed (random if absent; always recorded)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--config", help="JSON file with settings (flags override it)")
    common.add_argument("--threads", type=int, help="worker threads; results do not depend on it")
    common.add_argument("--no-figures", dest="figures", action="store_false", help="skip PNG rendering")

    p = _Parser(prog="upliftbounds", description=__doc__.splitlines()[0], allow_abbrev=False)
    p.add_argument("--version", action="version", version=f"upliftbounds {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], argument_default=S, allow_abbrev=False, help="randomised estimator benchmark")
    s.add_argument("--runs", type=int)
    s.add_argument("--n-range", dest="n_range", type=float, nargs=2, metavar=("LO", "HI"))
    s.add_argument("--v-range", dest="v_range", type=float, nargs=2, metavar=("LO", "HI"))
    s.add_argument("--A-range", dest="A_range", type=float, nargs=2, metavar=("LO", "HI"))
    for name in ("n", "v", "A"):
        s.add_argument(f"--{name}-law", dest=f"{name}_law", choices=("log", "uniform"))
    s.add_argument("--strata-bins", dest="strata_bins", type=int)
    s.add_argument("--strata-min-runs", dest="strata_min_runs", type=int)
    s.add_argument("--phi-bins", dest="phi_bins", type=int)

    w = sub.add_parser("sweep", parents=[common], argument_default=S, allow_abbrev=False, help="one-parameter sensitivity sweep")
    w.add_argument("--axis", help="A, N or v")
    w.add_argument("--grid", type=_float_list, help="comma-separated values")
    w.add_argument("--n", type=int, help="evaluation set size when not swept")
    w.add_argument("--v", type=int, help="binomial size when not swept")
    w.add_argument("--A", type=float, help="Dirichlet concentration when not swept")
    w.add_argument("--point", type=_float_list, help="alpha,beta,gamma,delta (normalised)")
    w.add_argument("--replicates", type=int)

    b = sub.add_parser("bounds", parents=[common], argument_default=S, allow_abbrev=False, help="bounds and estimates from a score file")
    b.add_argument("--scores", help="CSV with header id,s0_hat,s1_hat[,t,y]")

    e = sub.add_parser("estimate", parents=[common], argument_default=S, allow_abbrev=False, help="train, cross-validate and estimate")
    e.add_argument("--data", help="campaign CSV")
    e.add_argument("--schema", help="JSON sidecar with column roles")
    e.add_argument("--treatment-col", dest="treatment_col")
    e.add_argument("--outcome-col", dest="outcome_col")
    e.add_argument("--id-col", dest="id_col")
    e.add_argument("--delimiter")
    e.add_argument("--categorical", type=_str_list, help="comma-separated categorical columns")
    e.add_argument("--split", choices=("kfold", "holdout"))
    e.add_argument("--folds", type=int)
    e.add_argument("--test-fraction", dest="test_fraction", type=float)
    e.add_argument("--no-balance", dest="balance", action="store_false")
    e.add_argument("--ensemble-k", dest="ensemble_k", type=int)
    e.add_argument("--no-calibrate", dest="calibrate", action="store_false")
    e.add_argument("--calibration-order", dest="calibration_order", choices=("each", "after"))
    e.add_argument("--l2", type=float)
    e.add_argument("--max-iter", dest="max_iter", type=int)
    e.add_argument("--model-cov-replicates", dest="model_cov_replicates", type=int,
                   help="bootstrap retrains for the model covariance term (0 = off)")

    f = sub.add_parser("profit", parents=[common], argument_default=S, allow_abbrev=False, help="campaign profit from a report")
    f.add_argument("--report", help="report.json from bounds or estimate")
    f.add_argument("--value", type=float, help="customer value V")
    f.add_argument("--cost", type=float, help="contact cost C")
    f.add_argument("--contacted", type=int, help="number of contacted customers")
    f.add_argument("--population", type=int, help="population size (default: rows in report)")
    f.add_argument("--uplift", type=float, help="campaign uplift s0 - s1 (default: from report)")
    f.add_argument("--currency")
    return p


def resolve_config(argv) -> dict:
    args = vars(build_parser().parse_args(argv))
    cmd = args.pop("command")
    cfg = {**DEFAULTS["common"], **DEFAULTS[cmd]}
    if "config" in args:
        try:
            with open(args["config"], encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args['config']}: {exc}") from None
        if isinstance(loaded, dict) and "config" in loaded and "tool" in loaded:
            loaded = loaded["config"]
        if not isinstance(loaded, dict):
            raise UsageError("config must be a JSON object")
        loaded.pop("command", None)
        unknown = sorted(set(loaded) - set(cfg))
        if unknown:
            raise UsageError(f"unknown config key(s) for {cmd}: {unknown}")
        cfg.update(loaded)
    cfg.update(args)
    if cfg["seed"] is None:
        cfg["seed"] = secrets.randbits(63)
    cfg["command"] = cmd
    return cfg


# ---------------------------------------------------------------------------
# output helpers


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return x


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r[c]) for c in columns])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k.value if isinstance(k, Quantity) else k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return x


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


def artifact_meta(cfg: dict) -> dict:
    return {
        "tool": "upliftbounds",
        "version": __version__,
        "command": cfg["command"],
        "seed": cfg["seed"],
        "config": {k: v for k, v in cfg.items() if k not in EXECUTION_KEYS and k != "command"},
    }


class OutputDir:
    """Stage files in a sibling temp directory, then move them into place."""

    def __init__(self, target):
        self.target = Path(target)

    def __enter__(self) -> Path:
        parent = self.target.resolve().parent
        parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{self.target.name}.", dir=parent))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.tmp, ignore_errors=True)
            return False
        if not self.target.exists():
            os.rename(self.tmp, self.target)
            return False
        for f in sorted(self.tmp.iterdir()):
            os.replace(f, self.target / f.name)
        self.tmp.rmdir()
        return False


def _pct(x: float) -> str:
    return f"{100 * x:.2f}%"


def _table3_rows(report: dict) -> list[dict]:
    rows = [{"row": "point", **report["point"]}]
    for fam in ("uplift", "frechet"):
        for end in ("lower", "upper"):
            rows.append({"row": f"{fam}_{end}", **{q: report[f"{fam}_bounds"][q][end] for q in report["point"]}})
    return rows


def _print_report(report: dict, stream) -> None:
    print(f"{'':10s}" + "".join(f"{q.value:>20s}" for q in QUANTITIES), file=stream)
    print(f"{'point':10s}" + "".join(f"{_pct(report['point'][q.value]):>20s}" for q in QUANTITIES), file=stream)
    for fam, label in (("uplift_bounds", "uplift"), ("frechet_bounds", "frechet")):
        cells = []
        for q in QUANTITIES:
            iv = report[fam][q.value]
            cells.append(f"[{100 * iv['lower']:.2f}, {100 * iv['upper']:.2f}]")
        print(f"{label:10s}" + "".join(f"{c:>20s}" for c in cells), file=stream)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg: dict, out: Path, stream) -> dict:
    protocol = BenchmarkProtocol(
        runs=int(cfg["runs"]), n_range=tuple(cfg["n_range"]), v_range=tuple(cfg["v_range"]),
        A_range=tuple(cfg["A_range"]), n_law=cfg["n_law"], v_law=cfg["v_law"], A_law=cfg["A_law"],
        seed=int(cfg["seed"]),
    )
    report = run_benchmark(protocol, threads=int(cfg["threads"]))
    cols = report.columns
    write_csv(out / "benchmark_runs.csv", BENCHMARK_COLUMNS,
              ({c: cols[c][i] for c in BENCHMARK_COLUMNS} for i in range(len(report))))
    strata = [row for q in QUANTITIES for row in report.strata(q, cfg["strata_bins"], cfg["strata_min_runs"])]
    strata_cols = ["quantity", "bin_lower", "bin_upper", "runs", "mean_truth", "mean_point", "mean_uplift_lower",
                   "mean_uplift_upper", "mean_frechet_lower", "mean_frechet_upper"]
    write_csv(out / "fig1_strata.csv", strata_cols, strata)
    hist = report.phi_histogram(int(cfg["phi_bins"]))
    write_csv(out / "fig2_phi_hist.csv", ["bin_lower", "bin_upper", "runs"], hist)
    summary = {**report.summary(), "meta": artifact_meta(cfg)}
    write_json(out / "summary.json", summary)
    if cfg["figures"]:
        from .plotting import plot_phi_histogram, plot_strata

        plot_strata(strata, out / "fig1_strata.png", "alpha")
        plot_phi_histogram(hist, out / "fig2_phi_hist.png")
    t2 = summary["table2_beta"]
    print(f"benchmark: {protocol.runs} runs, seed {protocol.seed}", file=stream)
    print(f"  mean width    uplift {_pct(t2['mean_uplift_width'])}   Fréchet {_pct(t2['mean_frechet_width'])}", file=stream)
    print(f"  RMSE          point {_pct(t2['rmse_point'])}   uplift mid {_pct(t2['rmse_uplift_midpoint'])}"
          f"   Fréchet mid {_pct(t2['rmse_frechet_midpoint'])}", file=stream)
    return summary


def cmd_sweep(cfg: dict, out: Path, stream) -> dict:
    axis = cfg["axis"]
    if axis not in SWEEP_AXES:
        raise UsageError(f"--axis must be one of {list(SWEEP_AXES)}, got {axis!r}")
    d = DEFAULT_SWEEPS[axis]
    grid = cfg["grid"] if cfg["grid"] is not None else d["grid"]
    n = cfg["n"] if cfg["n"] is not None else d["n"]
    v = cfg["v"] if cfg["v"] is not None else d["v"]
    A = cfg["A"] if cfg["A"] is not None else d["A"]
    point = np.asarray(cfg["point"], dtype=float)
    if point.size != 4 or np.any(point <= 0):
        raise UsageError("--point needs four positive numbers")
    point = point / point.sum()
    fixed = SimulationParams(int(n), int(v), tuple(A * point), int(cfg["seed"]))
    res = sensitivity_sweep(axis, grid, fixed, int(cfg["replicates"]), threads=int(cfg["threads"]))
    rows = res.rows()
    write_csv(out / f"sweep_{axis}.csv", list(rows[0]), rows)
    rep_rows = []
    for g, value in enumerate(res.grid):
        for r in range(res.replicates["span"].shape[1]):
            rep_rows.append({"value": value, "replicate": r, **{m: res.replicates[m][g, r] for m in res.replicates}})
    write_csv(out / f"sweep_{axis}_replicates.csv", list(rep_rows[0]), rep_rows)
    summary = {"axis": axis, "grid": list(res.grid), "n": n, "v": v, "A": A, "point": point,
               "rows": rows, "meta": artifact_meta(cfg)}
    write_json(out / f"sweep_{axis}.json", summary)
    if cfg["figures"]:
        from .plotting import plot_sweep

        plot_sweep(rows, out / f"sweep_{axis}.png")
    print(f"sweep over {axis}: {len(rows)} grid points x {cfg['replicates']} replicates", file=stream)
    for r in rows:
        print(f"  {axis}={r['value']:<10g} entropy {r['entropy_mean']:.4f}  span {_pct(r['span_mean'])}"
              f"  |error| {_pct(r['abs_error_mean'])}", file=stream)
    return summary


def _finish_report(report: dict, cfg: dict, out: Path, stream) -> dict:
    report["meta"] = {**report.get("meta", {}), **artifact_meta(cfg)}
    write_json(out / "report.json", report)
    write_csv(out / "table3.csv", ["row", *(q.value for q in QUANTITIES)], _table3_rows(report))
    if cfg["figures"]:
        from .plotting import plot_bounds

        plot_bounds(report, out / "bounds.png")
    _print_report(report, stream)
    return report


def cmd_bounds(cfg: dict, out: Path, stream) -> dict:
    if not cfg["scores"]:
        raise UsageError("bounds needs --scores")
    scored = read_score_file(cfg["scores"])
    meta = {"n_treated": int(np.sum(scored.t)) if scored.t is not None else None}
    report = estimation_report(scored.scores, **meta).to_dict()
    return _finish_report(report, cfg, out, stream)


def cmd_estimate(cfg: dict, out: Path, stream) -> dict:
    if not cfg["data"]:
        raise UsageError("estimate needs --data")
    if cfg["schema"]:
        schema = CampaignSchema.from_json(cfg["schema"])
    else:
        schema = CampaignSchema(
            treatment=cfg["treatment_col"], outcome=cfg["outcome_col"], id=cfg["id_col"],
            categorical=tuple(cfg["categorical"]), delimiter=cfg["delimiter"],
        )
    ds = load_campaign_csv(cfg["data"], schema)
    try:
        learner = ScoreModelSpec(
            balance=bool(cfg["balance"]), k=int(cfg["ensemble_k"]), calibrate=bool(cfg["calibrate"]),
            calibration_order=cfg["calibration_order"], l2=float(cfg["l2"]), max_iter=int(cfg["max_iter"]),
            seed=int(cfg["seed"]),
        )
        split = SplitSpec(mode=cfg["split"], k=int(cfg["folds"]), test_fraction=float(cfg["test_fraction"]),
                          seed=int(cfg["seed"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rep, scored = run_algorithm_one(ds, learner, split, threads=int(cfg["threads"]))
    report = rep.to_dict()
    report["meta"] = {
        "n_rows": len(ds), "n_scored": len(scored), "n_treated": int(np.sum(ds.t)),
        "control_fraction": ds.control_fraction, "outcome_rate_control": ds.outcome_rate(0),
        "outcome_rate_treated": ds.outcome_rate(1), "features": list(ds.feature_names), "split": split.mode,
    }
    if int(cfg["model_cov_replicates"]) > 0:
        report["meta"]["model_cov_term"] = model_covariance_term(
            ds, learner, ds.X, replicates=int(cfg["model_cov_replicates"]), seed=int(cfg["seed"]))
    write_score_file(out / "scores.csv", scored)
    return _finish_report(report, cfg, out, stream)


def cmd_profit(cfg: dict, out: Path, stream) -> dict:
    if not cfg["report"]:
        raise UsageError("profit needs --report")
    try:
        with open(cfg["report"], encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"report {cfg['report']} is not valid JSON: {exc}") from None
    rep = EstimationReport.from_dict(raw)
    meta = raw.get("meta", {})
    contacted = cfg["contacted"] if cfg["contacted"] is not None else meta.get("n_treated")
    if contacted is None:
        raise UsageError("profit needs --contacted (the report does not record the treated count)")
    population = cfg["population"] if cfg["population"] is not None else rep.n_samples
    uplift = cfg["uplift"] if cfg["uplift"] is not None else rep.uplift
    inputs = ProfitInputs(
        n_contacted=int(contacted), uplift=float(uplift), value=float(cfg["value"]), cost=float(cfg["cost"]),
        population_size=int(population), beta_interval=rep.uplift_intervals[Quantity.BETA],
        beta_point=rep.point[Quantity.BETA], currency=cfg["currency"],
    )
    result = {**profit_report(inputs), "meta": artifact_meta(cfg)}
    write_json(out / "profit.json", result)
    c = result["currency"]
    p = result["persuadables"]
    print(f"realized profit            {result['realized_profit']:.2f} {c}", file=stream)
    print(f"persuadables               {p['point']} (bounds {p['lower']}..{p['upper']})", file=stream)
    print(f"persuadable-only profit    {result['persuadable_only_profit']:.2f} {c}", file=stream)
    r = result["persuadable_profit_range"]
    print(f"  over beta bounds         {r['lower']:.2f} .. {r['upper']:.2f} {c}", file=stream)
    return result


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "bounds": cmd_bounds,
    "estimate": cmd_estimate,
    "profit": cmd_profit,
}


def main(argv=None, stream=None) -> int:
    stream = stream or sys.stdout
    try:
        cfg = resolve_config(sys.argv[1:] if argv is None else argv)
        with OutputDir(cfg["out"]) as tmp:
            COMMANDS[cfg["command"]](cfg, tmp, stream)
            write_json(tmp / "manifest.json", {
                **artifact_meta(cfg), "files": sorted(p.name for p in tmp.iterdir()) + ["manifest.json"],
            })
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataValidationError, DomainError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
