"""Command-line entry point: ``cvselect select | simulate | diagnose``.

Exit codes: 0 on success, 2 for invalid configuration or input, 3 for
computational failures (every model failed, singular designs, too many
failed replications).
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, diagnostics, io, linalg
from .criterion import KNOWN, UNKNOWN, cv_score, lambda_n, predict_future, select_model
from .errors import (
    ConfigError,
    CVSelectError,
    DataError,
    DimensionError,
    DomainError,
    ModelSpaceError,
    SchemeError,
)
from .models import enumerate_models
from .oracle import TruthSpec
from .schemes import disjoint_scheme, minimal_rotation_r, rotation_scheme, validate_scheme
from .simulation import ExperimentConfig, resolve_train_size, run_experiment

logger = logging.getLogger("cvselect")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_COMPUTE = 3

_INPUT_ERRORS = (ConfigError, DataError, SchemeError, ModelSpaceError, DimensionError, DomainError)


def _parse_models(text: str, p: int):
    if text == "nested":
        return enumerate_models("nested", p)
    if text == "all" or text.startswith("all:"):
        max_size = int(text.split(":", 1)[1]) if ":" in text else None
        return enumerate_models("all-subsets", p, max_size=max_size)
    path = Path(text)
    if not path.is_file():
        raise ConfigError(
            f"--models must be 'nested', 'all:<max>' or a file of column lists, got {text!r}",
            "models",
        )
    lists = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            lists.append([int(tok) for tok in line.replace(",", " ").split()])
        except ValueError:
            raise ConfigError(f"{path}: line {line_no}: expected integers, got {line!r}", "models") from None
    return enumerate_models("explicit", p, models=lists)


def _build_scheme(text: str, n: int, train_size: int | None, min_size: int):
    kind, _, r_text = text.partition(":")
    if kind not in ("disjoint", "rotation"):
        raise ConfigError(f"--scheme must be 'disjoint' or 'rotation:<r>', got {text!r}", "scheme")
    if train_size is None:
        train_size = resolve_train_size(n, {"rule": "power", "c": 1.0, "gamma": 0.6}, kind, min_size)
    if kind == "disjoint":
        scheme = disjoint_scheme(n, train_size)
    else:
        r = int(r_text) if r_text else minimal_rotation_r(n, train_size)
        scheme = rotation_scheme(n, train_size, r)
    check = validate_scheme(scheme, min_size)
    if not check.ok:
        raise ConfigError("; ".join(check.messages()), "train_size")
    return scheme


def _load_problem(args):
    data = io.load_csv(args.data, args.response)
    X = data.predictors
    n, p = X.shape
    if p == 0:
        raise DataError("the data file has no predictor columns")
    space = _parse_models(args.models, p)
    scheme = _build_scheme(args.scheme, n, args.train_size, space.max_size + 1)
    return data, space, scheme


def _a_in_table(space, X, scheme):
    lam = lambda_n(scheme.n, scheme.train_size)
    rows = []
    for alpha in space:
        try:
            mean = diagnostics.mean_a_in(X, alpha, scheme)
        except CVSelectError as exc:
            rows.append({"model": list(alpha.columns), "error": str(exc)})
            continue
        rows.append(
            {
                "model": list(alpha.columns),
                "mean_a_in": mean,
                "ratio_to_dimension_lambda": mean / (alpha.size * lam) if lam > 0 else None,
            }
        )
    return {"lambda_n": lam, "models": rows}


def _exact_offsets(report, X, y, scheme):
    """Per-model gap between the normalized and the criterion-core unknown-variance scores.

    The gap depends on the model dimension, so ranking by the normalized
    predictive density can differ from ranking by the criterion.
    """
    if report.variant != UNKNOWN:
        return None
    out = []
    for v in report.values:
        exact = cv_score(X, y, v.alpha, scheme, UNKNOWN, exact=True)
        core = cv_score(X, y, v.alpha, scheme, UNKNOWN, exact=False)
        out.append({"model": list(v.alpha.columns), "offset": exact - core})
    return out


def _echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def cmd_select(args) -> int:
    start = time.perf_counter()
    data, space, scheme = _load_problem(args)
    X = data.predictors
    variant = KNOWN if args.sigma2 is not None else UNKNOWN
    report = select_model(space, X, data.response, scheme, variant, args.sigma2)
    fitted = predict_future(X, data.response, report.selected)
    payload = {
        "tool_version": __version__,
        "command": "select",
        "config": _echo(args),
        "columns": list(data.columns),
        "scheme": scheme.to_dict(),
        "selection": report.to_dict(),
        "selected_columns": [data.columns[c - 1] for c in report.selected.columns],
        "fitted": fitted,
        "a_in": _a_in_table(space, X, scheme),
        "exact_density_offset": _exact_offsets(report, X, data.response, scheme),
        "timing_seconds": time.perf_counter() - start,
    }
    _emit(args.out, payload)
    print(f"selected {report.selected} ({', '.join(payload['selected_columns'])}) variant={variant}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    start = time.perf_counter()
    data, space, scheme = _load_problem(args)
    X = data.predictors
    truth = None
    if args.truth_mu is not None:
        mu = io.load_vector_csv(args.truth_mu)
        if mu.shape[0] != data.n:
            raise DataError(f"--truth-mu has {mu.shape[0]} values, data has {data.n} rows")
        sigma2 = args.sigma2
        if sigma2 is None:
            f = linalg.factor(X)
            f.require_full_rank()
            dof = data.n - X.shape[1]
            if dof < 1:
                raise DataError("cannot estimate sigma2: no residual degrees of freedom; pass --sigma2")
            sigma2 = linalg.rss(f, data.response) / dof
        truth = TruthSpec(mu, sigma2)
    report = diagnostics.condition_report(list(space), X, scheme, truth, m=args.m)
    payload = {
        "tool_version": __version__,
        "command": "diagnose",
        "config": _echo(args),
        "scheme": scheme.to_dict(),
        "sigma2_used": truth.sigma2 if truth is not None else None,
        "conditions": report.to_dict(),
        "timing_seconds": time.perf_counter() - start,
    }
    _emit(args.out, payload)
    for key, value in report.values.items():
        print(f"{key}: {value}")
    return EXIT_OK


def resolve_threads(flag: int | None) -> int:
    env = os.environ.get("CVSELECT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"CVSELECT_THREADS must be an integer, got {env!r}") from None
    if flag is not None:
        if flag < 1:
            raise ConfigError(f"--threads must be >= 1, got {flag}", "threads")
        return flag
    return os.cpu_count() or 1


def cmd_simulate(args) -> int:
    start = time.perf_counter()
    config = ExperimentConfig.from_dict(io.load_config(args.config))
    threads = resolve_threads(args.threads)
    report = run_experiment(config, threads=threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"tool_version": __version__, "command": "simulate"}
    payload.update(report.to_dict())
    io.write_report(out / "report.json", payload)
    io.write_table(out / "runs.csv", report.runs_table(), io.RUNS_COLUMNS)
    io.write_table(out / "summary.csv", report.summary_table(), io.SUMMARY_COLUMNS)
    io.write_report(
        out / "timing.json", {"threads": threads, "seconds": time.perf_counter() - start}
    )
    for row in report.summary_table():
        med = row["ratio_median"]
        freq = row["correct_selection_frequency"]
        print(
            f"n={row['n']} median_ratio={med:.4f} "
            f"correct_freq={'NA' if freq is None else f'{freq:.3f}'}"
            if med is not None and math.isfinite(med)
            else f"n={row['n']} no successful replications"
        )
    return EXIT_OK


def _emit(out, payload):
    if out is None:
        return
    io.write_report(out, payload)


def _add_problem_flags(sub):
    sub.add_argument("--data", required=True, help="CSV file with a header row")
    sub.add_argument("--response", required=True, help="name of the response column")
    sub.add_argument(
        "--models", default="nested", help="'nested', 'all:<max size>', or a file of column lists"
    )
    sub.add_argument("--scheme", default="disjoint", help="'disjoint' or 'rotation:<r>'")
    sub.add_argument(
        "--train-size", type=int, default=None, help="training-sample size (default: near n^0.6)"
    )
    sub.add_argument("--sigma2", type=float, default=None, help="known error variance")
    sub.add_argument("--seed", type=int, default=None, help="accepted for uniformity; unused")
    sub.add_argument("--out", default=None, help="path of the JSON report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvselect", description="Cross-validatory predictive model selection."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    subs = parser.add_subparsers(dest="command", required=True)

    sel = subs.add_parser("select", help="select a model for a data set")
    _add_problem_flags(sel)
    sel.set_defaults(func=cmd_select)

    diag = subs.add_parser("diagnose", help="report finite-n condition diagnostics")
    _add_problem_flags(diag)
    diag.add_argument("--truth-mu", default=None, help="CSV with the true mean in its first column")
    diag.add_argument("--m", type=int, default=diagnostics.DEFAULT_M, help="moment index for the risk sums")
    diag.set_defaults(func=cmd_diagnose)

    sim = subs.add_parser("simulate", help="run a Monte Carlo experiment from a JSON config")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--threads", type=int, default=None)
    sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        where = f" [{exc.path}]" if getattr(exc, "path", None) else ""
        print(f"error{where}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CVSelectError as exc:
        print(f"computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except np.linalg.LinAlgError as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
