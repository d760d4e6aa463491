"""
Monte Carlo harness for replicated selection experiments.

For every sample size in the grid the harness builds a fixed design, true
mean, model space and training scheme, then for each replication draws
errors, selects a model, and compares its loss with the oracle's.  Random
streams are keyed by ``(seed, n)`` for the design and ``(seed, n, rep)``
for the errors, so results do not depend on thread count or execution order.
"""

from __future__ import annotations

import copy
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import jsonschema
import numpy as np

from . import diagnostics
from .criterion import KNOWN, UNKNOWN, VARIANTS, gamma1_unknown, prepare_model, select_model
from .errors import ConfigError, CVSelectError, ExperimentFailedError
from .models import ModelAlpha, enumerate_models
from .oracle import TruthSpec, loss_profile, u_n
from .schemes import (
    TrainingScheme,
    disjoint_scheme,
    minimal_rotation_r,
    rotation_scheme,
    validate_scheme,
)

logger = logging.getLogger(__name__)

DESIGN_IDS = ("iid-gaussian-columns", "equispaced-polynomial", "orthogonal")
TRUTH_IDS = ("linear-in-subset", "smooth-nonlinear")
ERROR_DISTS = ("normal", "scaled-uniform", "shifted-exponential")
SMOOTH_FUNCTIONS = {
    "exp": np.exp,
    "sin": lambda t: np.sin(2 * np.pi * t),
    "cos": lambda t: np.cos(2 * np.pi * t),
    "sqrt": np.sqrt,
    "log1p": np.log1p,
}
QUANTILES = (0.1, 0.5, 0.9)

_DESIGN_STREAM = 0
_ERROR_STREAM = 1


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Design:
    """Design matrix plus the scalar covariate ``t`` smooth truths are built from."""

    X: np.ndarray
    t: np.ndarray


def gen_design(design_id: str, params: dict, n: int, rng: np.random.Generator) -> Design:
    params = dict(params or {})
    if design_id == "equispaced-polynomial":
        p = int(params.get("p", 5))
        t = np.arange(1, n + 1, dtype=np.float64) / n
        if params.get("shuffle", False):
            t = t[rng.permutation(n)]
        X = np.vander(t, p, increasing=True)
        return Design(X, t)
    if design_id == "iid-gaussian-columns":
        p = int(params.get("p", 3))
        intercept = bool(params.get("intercept", True))
        X = rng.standard_normal((n, p))
        if intercept:
            X[:, 0] = 1.0
        if p > int(intercept):
            t = X[:, int(intercept)].copy()
        else:
            t = np.arange(1, n + 1, dtype=np.float64) / n
        return Design(X, t)
    if design_id == "orthogonal":
        p = int(params.get("p", 3))
        if p > n:
            raise ConfigError(f"orthogonal design needs p <= n, got p={p}, n={n}", "design.params.p")
        i = np.arange(n, dtype=np.float64)
        X = np.stack([np.cos(np.pi * j * (i + 0.5) / n) for j in range(p)], axis=1)
        return Design(X, (i + 1) / n)
    raise ConfigError(f"unknown design id {design_id!r}", "design.id")


def gen_truth(truth_id: str, params: dict, design: Design) -> np.ndarray:
    params = dict(params or {})
    X = design.X
    if truth_id == "linear-in-subset":
        cols = [int(c) for c in params.get("columns", [1])]
        beta = np.asarray(params.get("beta", [1.0] * len(cols)), dtype=np.float64)
        if len(cols) != beta.shape[0]:
            raise ConfigError("truth columns and beta differ in length", "truth.params.beta")
        if any(c < 1 or c > X.shape[1] for c in cols):
            raise ConfigError(f"truth column out of range 1..{X.shape[1]}", "truth.params.columns")
        return X[:, np.asarray(cols) - 1] @ beta
    if truth_id == "smooth-nonlinear":
        name = params.get("function", "exp")
        if name not in SMOOTH_FUNCTIONS:
            raise ConfigError(f"unknown smooth function {name!r}", "truth.params.function")
        return float(params.get("scale", 1.0)) * SMOOTH_FUNCTIONS[name](design.t)
    raise ConfigError(f"unknown truth id {truth_id!r}", "truth.id")


def gen_errors(dist: str, sigma: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Mean-zero i.i.d. errors with standard deviation ``sigma``."""
    if not sigma > 0:
        raise ConfigError(f"sigma must be positive, got {sigma}", "errors.sigma")
    if dist == "normal":
        return sigma * rng.standard_normal(n)
    if dist == "scaled-uniform":
        h = math.sqrt(3.0) * sigma
        return rng.uniform(-h, h, n)
    if dist == "shifted-exponential":
        return sigma * (rng.standard_exponential(n) - 1.0)
    raise ConfigError(f"unknown error distribution {dist!r}", "errors.dist")


def design_rng(seed: int, n: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, n, _DESIGN_STREAM]))


def replication_rng(seed: int, n: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, n, _ERROR_STREAM, rep]))


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

CONFIG_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["n_grid", "replications", "design", "truth", "errors", "seed"],
    "properties": {
        "n_grid": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "integer", "minimum": 3},
        },
        "replications": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "design": {
            "type": "object",
            "additionalProperties": False,
            "required": ["id"],
            "properties": {
                "id": {"enum": list(DESIGN_IDS)},
                "params": {"type": "object"},
            },
        },
        "truth": {
            "type": "object",
            "additionalProperties": False,
            "required": ["id"],
            "properties": {
                "id": {"enum": list(TRUTH_IDS)},
                "params": {"type": "object"},
            },
        },
        "errors": {
            "type": "object",
            "additionalProperties": False,
            "required": ["sigma"],
            "properties": {
                "dist": {"enum": list(ERROR_DISTS)},
                "sigma": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "scheme": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["disjoint", "rotation"]},
                "r": {"type": "integer", "minimum": 1},
                "train_size": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["rule"],
                    "properties": {
                        "rule": {"enum": ["power", "fraction", "fixed"]},
                        "c": {"type": "number", "exclusiveMinimum": 0},
                        "gamma": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                        "value": {"type": "integer", "minimum": 1},
                    },
                },
            },
        },
        "models": {
            "type": "object",
            "additionalProperties": False,
            "required": ["mode"],
            "properties": {
                "mode": {"enum": ["nested", "all-subsets", "explicit"]},
                "max_size": {"type": "integer", "minimum": 1},
                "models": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "minItems": 1,
                        "items": {"type": "integer", "minimum": 1},
                    },
                },
            },
        },
        "variant": {"enum": list(VARIANTS)},
        "m": {"type": "integer", "minimum": 1},
        "correct_tol_scale": {"type": "number", "exclusiveMinimum": 0},
        "tie_tol": {"type": "number", "minimum": 0},
        "max_failure_fraction": {"type": "number", "minimum": 0, "maximum": 1},
        "uniform_ratios": {"type": "boolean"},
    },
}

DEFAULTS: dict[str, Any] = {
    "errors": {"dist": "normal"},
    "scheme": {"kind": "disjoint", "train_size": {"rule": "power", "c": 1.0, "gamma": 0.6}},
    "models": {"mode": "nested"},
    "variant": KNOWN,
    "m": diagnostics.DEFAULT_M,
    "correct_tol_scale": 1e-13,
    "tie_tol": 1e-10,
    "max_failure_fraction": 0.1,
    "uniform_ratios": True,
}


def _merge(defaults: dict, given: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _field_path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = err.message.split("'")[1] if "'" in err.message else ""
        parts.append(missing)
    if err.validator == "additionalProperties" and "'" in err.message:
        parts.append(err.message.split("'")[1])
    return ".".join(p for p in parts if p) or "<root>"


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment configuration with defaults filled in."""

    data: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
        errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
        if errors:
            err = errors[0]
            path = _field_path(err)
            raise ConfigError(f"invalid config at {path}: {err.message}", path)
        data = _merge(DEFAULTS, raw)
        ts = data["scheme"]["train_size"]
        if ts["rule"] == "fixed" and "value" not in ts:
            raise ConfigError("fixed train_size rule needs 'value'", "scheme.train_size.value")
        if ts["rule"] == "fraction" and not 0 < ts.get("c", 0) < 1:
            raise ConfigError("fraction rule needs 0 < c < 1", "scheme.train_size.c")
        if data["models"]["mode"] == "explicit" and not data["models"].get("models"):
            raise ConfigError("explicit model space needs 'models'", "models.models")
        return cls(data)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def __getitem__(self, key):
        return self.data[key]

    @property
    def model_true(self) -> bool:
        return self.data["truth"]["id"] == "linear-in-subset"


def target_train_size(n: int, rule: dict) -> int:
    kind = rule["rule"]
    if kind == "power":
        return math.ceil(rule.get("c", 1.0) * n ** rule.get("gamma", 0.6))
    if kind == "fraction":
        return math.ceil(rule["c"] * n)
    return int(rule["value"])


def resolve_train_size(n: int, rule: dict, kind: str, min_size: int) -> int:
    """Training-sample size for sample size ``n``.

    The rule's target is clamped to ``[min_size, n - 1]``.  A disjoint
    scheme additionally needs a divisor of n, so the divisor of n nearest
    the target is used (ties go to the larger divisor).
    """
    target = min(max(target_train_size(n, rule), min_size), n - 1)
    if kind != "disjoint":
        if target < min_size:
            raise ConfigError(f"n={n} is too small for training samples of size {min_size}")
        return target
    divisors = [d for d in range(max(min_size, 1), n) if n % d == 0]
    if not divisors:
        raise ConfigError(
            f"n={n} has no divisor in [{min_size}, {n - 1}] for a disjoint scheme",
            "scheme.train_size",
        )
    return min(divisors, key=lambda d: (abs(d - target), -d))


def build_scheme(n: int, train_size: int, scheme_cfg: dict) -> TrainingScheme:
    if scheme_cfg.get("kind", "disjoint") == "disjoint":
        return disjoint_scheme(n, train_size)
    r = scheme_cfg.get("r") or minimal_rotation_r(n, train_size)
    return rotation_scheme(n, train_size, r)


# --------------------------------------------------------------------------
# experiment
# --------------------------------------------------------------------------


@dataclass
class SampleSizeSetup:
    n: int
    X: np.ndarray
    truth: TruthSpec
    space: list[ModelAlpha]
    scheme: TrainingScheme
    prepared: dict
    correct: list[ModelAlpha]
    alpha_c: ModelAlpha | None
    correct_tol: float
    bias_ratios: dict
    conditions: diagnostics.ConditionReport


def setup_sample_size(config: ExperimentConfig, n: int) -> SampleSizeSetup:
    cfg = config.data
    design = gen_design(cfg["design"]["id"], cfg["design"].get("params", {}), n, design_rng(cfg["seed"], n))
    mu = gen_truth(cfg["truth"]["id"], cfg["truth"].get("params", {}), design)
    sigma = float(cfg["errors"]["sigma"])
    truth = TruthSpec(mu, sigma**2)
    X = design.X
    mcfg = cfg["models"]
    space = list(
        enumerate_models(
            mcfg["mode"], X.shape[1], max_size=mcfg.get("max_size"), models=mcfg.get("models")
        )
    )
    min_size = max(a.size for a in space) + 1
    train_size = resolve_train_size(n, cfg["scheme"]["train_size"], cfg["scheme"]["kind"], min_size)
    scheme = build_scheme(n, train_size, cfg["scheme"])
    check = validate_scheme(scheme, min_size)
    if not check.ok:
        raise ConfigError(f"n={n}: " + "; ".join(check.messages()), "scheme")
    prepared = {a: prepare_model(X, a, scheme) for a in space}
    correct_tol = cfg["correct_tol_scale"] * (float(mu @ mu) / n + 1.0)
    profile = loss_profile(space, X, mu, truth, tol=correct_tol)
    correct = profile.correct
    alpha_c = profile.parsimonious_correct
    if config.model_true and alpha_c is None:
        raise ExperimentFailedError(f"n={n}: model-true config but no candidate model is correct")
    if not config.model_true and correct:
        raise ExperimentFailedError(
            f"n={n}: model-false config but {correct[0]} reproduces the truth exactly"
        )
    bias_ratios = {a: diagnostics.training_bias_ratio(X, a, mu, scheme) for a in space}
    conditions = diagnostics.condition_report(space, X, scheme, truth, cfg["m"], correct_tol)
    return SampleSizeSetup(
        n, X, truth, space, scheme, prepared, correct, alpha_c, correct_tol, bias_ratios, conditions
    )


@dataclass
class ReplicationRecord:
    n: int
    rep: int
    selected: ModelAlpha | None = None
    oracle: ModelAlpha | None = None
    loss_selected: float | None = None
    loss_oracle: float | None = None
    ratio: float | None = None
    correct_selected: bool | None = None
    tie_broken: bool = False
    full_model_log_rss_positive: bool | None = None
    uniform: dict = field(default_factory=dict)
    gamma1_u_gap: float | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "rep": self.rep,
            "selected": list(self.selected.columns) if self.selected else None,
            "oracle": list(self.oracle.columns) if self.oracle else None,
            "loss_selected": self.loss_selected,
            "loss_oracle": self.loss_oracle,
            "ratio": self.ratio,
            "correct_selected": self.correct_selected,
            "tie_broken": self.tie_broken,
            "full_model_log_rss_positive": self.full_model_log_rss_positive,
            "uniform": dict(self.uniform),
            "gamma1_u_gap": self.gamma1_u_gap,
            "error": self.error,
        }


def run_replication(config: ExperimentConfig, setup: SampleSizeSetup, rep: int) -> ReplicationRecord:
    cfg = config.data
    n = setup.n
    rec = ReplicationRecord(n, rep)
    rng = replication_rng(cfg["seed"], n, rep)
    e = gen_errors(cfg["errors"].get("dist", "normal"), float(cfg["errors"]["sigma"]), n, rng)
    y = setup.truth.mu + e
    variant = cfg["variant"]
    sigma2 = setup.truth.sigma2 if variant == KNOWN else None
    try:
        report = select_model(
            setup.space,
            setup.X,
            y,
            setup.scheme,
            variant,
            sigma2,
            prepared=setup.prepared,
            tie_tol=cfg["tie_tol"],
        )
        profile = loss_profile(setup.space, setup.X, y, setup.truth, tol=setup.correct_tol, tie_tol=cfg["tie_tol"])
    except CVSelectError as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
        return rec
    rec.selected = report.selected
    rec.tie_broken = report.tie_broken
    rec.oracle = profile.oracle
    rec.loss_selected = profile.loss_of(report.selected)
    rec.loss_oracle = profile.min_loss
    rec.ratio = rec.loss_selected / rec.loss_oracle if rec.loss_oracle > 0 else 1.0
    if setup.alpha_c is not None:
        rec.correct_selected = report.selected == setup.alpha_c
    rec.full_model_log_rss_positive = diagnostics.full_model_log_rss_positive(setup.X, y, setup.scheme)
    if cfg["uniform_ratios"]:
        rec.uniform = diagnostics.empirical_uniform_ratios(
            setup.space, setup.X, setup.truth, setup.scheme, e, setup.bias_ratios
        )
    if variant == UNKNOWN:
        gaps = []
        for entry in profile.entries:
            g1 = gamma1_unknown(
                None, y, entry.alpha, setup.scheme, setup.truth.sigma2, prepared=setup.prepared[entry.alpha]
            )
            gaps.append(abs(g1 - u_n(e, entry.loss, setup.truth.sigma2)))
        rec.gamma1_u_gap = max(gaps)
    return rec


def _median(values):
    vals = [v for v in values if v is not None and not math.isnan(v)]
    return float(np.median(vals)) if vals else None


def _trend(values: list) -> str:
    vals = [v for v in values if v is not None]
    if len(vals) < 2 or len(vals) != len(values):
        return "undefined"
    d = np.diff(np.asarray(vals, dtype=np.float64))
    if np.all(d < 0):
        return "decreasing"
    if np.all(d > 0):
        return "increasing"
    if np.all(d == 0):
        return "constant"
    return "non-monotone"


def summarize(setup: SampleSizeSetup, records: list[ReplicationRecord]) -> dict:
    ok = [r for r in records if not r.failed]
    ratios = sorted(r.ratio for r in ok)
    counts: dict[str, int] = {}
    for r in ok:
        counts[r.selected.label] = counts.get(r.selected.label, 0) + 1
    summary = {
        "n": setup.n,
        "scheme": setup.scheme.to_dict(),
        "replications": len(records),
        "failures": len(records) - len(ok),
        "ratio_quantiles": (
            {str(q): float(np.quantile(ratios, q)) for q in QUANTILES} if ratios else None
        ),
        "ratio_mean": float(np.mean(ratios)) if ratios else None,
        "oracle_hit_rate": (
            float(np.mean([r.selected == r.oracle for r in ok])) if ok else None
        ),
        "parsimonious_correct": list(setup.alpha_c.columns) if setup.alpha_c else None,
        "correct_selection_frequency": (
            float(np.mean([r.correct_selected for r in ok])) if ok and setup.alpha_c else None
        ),
        "selection_counts": dict(sorted(counts.items())),
        "full_model_log_rss_positive_frequency": (
            float(np.mean([r.full_model_log_rss_positive for r in ok])) if ok else None
        ),
        "conditions": setup.conditions.to_dict(),
    }
    if ok and ok[0].uniform:
        keys = ok[0].uniform.keys()
        summary["uniform_ratio_medians"] = {k: _median([r.uniform[k] for r in ok]) for k in keys}
        tb = [r.uniform["training_bias_ratio"] for r in ok]
        summary["training_bias_ratio_max"] = max(
            (v for v in tb if not math.isnan(v)), default=None
        )
    if ok and ok[0].gamma1_u_gap is not None:
        summary["gamma1_u_gap_median"] = _median([r.gamma1_u_gap for r in ok])
    return summary


@dataclass
class ExperimentReport:
    config: dict
    per_n: list[dict]
    records: list[ReplicationRecord]
    trends: dict[str, str]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "summary": self.per_n,
            "condition_trends": self.trends,
            "records": [r.to_dict() for r in self.records],
        }

    def runs_table(self) -> list[dict]:
        rows = []
        for r in self.records:
            rows.append(
                {
                    "n": r.n,
                    "rep": r.rep,
                    "ratio": r.ratio,
                    "selected": r.selected.label if r.selected else None,
                    "oracle": r.oracle.label if r.oracle else None,
                    "correct_selected": (
                        None if r.correct_selected is None else int(r.correct_selected)
                    ),
                }
            )
        return rows

    def summary_table(self) -> list[dict]:
        rows = []
        for s in self.per_n:
            q = s["ratio_quantiles"] or {}
            rows.append(
                {
                    "n": s["n"],
                    "train_size": s["scheme"]["train_size"],
                    "r": s["scheme"]["r"],
                    "replications": s["replications"],
                    "failures": s["failures"],
                    "ratio_q10": q.get("0.1"),
                    "ratio_median": q.get("0.5"),
                    "ratio_q90": q.get("0.9"),
                    "correct_selection_frequency": s["correct_selection_frequency"],
                }
            )
        return rows


def default_threads() -> int:
    env = os.environ.get("CVSELECT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"CVSELECT_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def run_experiment(config: ExperimentConfig | dict, threads: int | None = None) -> ExperimentReport:
    """Run every (n, replication) cell of the experiment.

    Per-replication failures are recorded; the run aborts only if more than
    ``max_failure_fraction`` of the replications at some n fail.
    """
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig.from_dict(config)
    cfg = config.data
    threads = threads or default_threads()
    reps = cfg["replications"]
    per_n = []
    records: list[ReplicationRecord] = []
    for n in cfg["n_grid"]:
        setup = setup_sample_size(config, n)
        logger.info("n=%d: train_size=%d r=%d", n, setup.scheme.train_size, setup.scheme.r)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                recs = list(pool.map(lambda i: run_replication(config, setup, i), range(reps)))
        else:
            recs = [run_replication(config, setup, i) for i in range(reps)]
        n_failed = sum(r.failed for r in recs)
        if n_failed > cfg["max_failure_fraction"] * reps:
            raise ExperimentFailedError(
                f"n={n}: {n_failed} of {reps} replications failed; first error: "
                + next(r.error for r in recs if r.failed)
            )
        per_n.append(summarize(setup, recs))
        records.extend(recs)
    keys = list(per_n[0]["conditions"]["values"].keys())
    trends = {k: _trend([s["conditions"]["values"].get(k) for s in per_n]) for k in keys}
    return ExperimentReport(config.to_dict(), per_n, records, trends)
