"""
Finite-n regularity diagnostics.

The optimality results for the criterion rest on asymptotic conditions:
summability of inverse risks, growth of the minimal risk against
``p_n * lambda_n``, vanishing log-determinant discrepancies ``a_in``,
identifiability of the candidate models, and (in the model-true case)
conditions on the correct submodels.  None of them can be certified at a
fixed n; this module evaluates each as a number so that trajectories along an
n-grid can be inspected.  Nothing here passes or fails.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from . import linalg
from .criterion import lambda_n, prepare_model
from .models import ModelAlpha, default_correct_tol, submatrix
from .oracle import TruthSpec, delta_n, risk
from .schemes import TrainingScheme

DEFAULT_M = 2

# relative squared bias below this is indistinguishable from rounding
_BIAS_FLOOR = 1e-20

RISK = "risk"
PN_LAMBDA = "pn-lambda"


def cond_sum_inverse_risk(
    models: Sequence[ModelAlpha], X, truth: TruthSpec, m: int = DEFAULT_M
) -> float:
    """``sum_alpha 1 / (n R_n(alpha))^m``; zero-risk models are skipped with a warning."""
    if m < 1:
        raise ValueError(f"m must be a positive integer, got {m}")
    total = 0.0
    skipped = []
    for alpha in models:
        nr = truth.n * risk(X, alpha, truth)
        if nr <= 0:
            skipped.append(alpha)
            continue
        total += nr ** (-m)
    if skipped:
        warnings.warn(f"zero-risk models excluded from the sum: {skipped}", RuntimeWarning)
    return total


def cond_pn_lambda_ratio(
    models: Sequence[ModelAlpha], X, truth: TruthSpec, train_size: int, p: int | None = None
) -> float:
    """``p_n lambda_n / min_alpha n R_n(alpha)``; NaN when the minimal risk is zero."""
    if p is None:
        p = linalg.as_matrix(X).shape[1]
    min_nr = min(truth.n * risk(X, alpha, truth) for alpha in models)
    if min_nr <= 0:
        return math.nan
    return p * lambda_n(truth.n, train_size) / min_nr


@dataclass
class AInSummary:
    """Averaged ``a_in`` per model, normalized and raw.

    ``max_ratio`` is the maximum over models of ``mean_i a_in / normalizer``;
    ``max_raw`` the maximum of ``|mean_i a_in| / n``.
    """

    normalizer: str
    max_ratio: float
    max_raw: float
    per_model: dict[ModelAlpha, float] = field(default_factory=dict)


def mean_a_in(X, alpha: ModelAlpha, scheme: TrainingScheme) -> float:
    return float(np.mean(prepare_model(X, alpha, scheme).a_in()))


def cond_a_in(
    models: Sequence[ModelAlpha],
    X,
    scheme: TrainingScheme,
    normalizer: str = PN_LAMBDA,
    truth: TruthSpec | None = None,
) -> AInSummary:
    n = scheme.n
    lam = lambda_n(n, scheme.train_size)
    if normalizer == RISK and truth is None:
        raise ValueError("the risk normalizer needs the truth")
    if normalizer not in (RISK, PN_LAMBDA):
        raise ValueError(f"unknown normalizer {normalizer!r}")
    per = {}
    ratios = []
    raws = []
    for alpha in models:
        a = mean_a_in(X, alpha, scheme)
        per[alpha] = a
        raws.append(abs(a) / n)
        if normalizer == RISK:
            denom = n * risk(X, alpha, truth)
        else:
            denom = alpha.size * lam
        ratios.append(a / denom if denom > 0 else math.inf)
    return AInSummary(normalizer, max(ratios), max(raws), per)


def cond_a_in_excess(
    correct: Sequence[ModelAlpha], X, scheme: TrainingScheme, alpha_c: ModelAlpha
) -> float:
    """``max_alpha mean_i [a_in(alpha) - a_in(alpha_c)] / ((p(alpha) - p(alpha_c)) lambda_n)``.

    Taken over correct models other than ``alpha_c``; NaN when there are none
    and infinite when a correct model has the same size as ``alpha_c``.
    """
    lam = lambda_n(scheme.n, scheme.train_size)
    base = mean_a_in(X, alpha_c, scheme)
    vals = []
    for alpha in correct:
        if alpha == alpha_c:
            continue
        gap = alpha.size - alpha_c.size
        diff = mean_a_in(X, alpha, scheme) - base
        vals.append(diff / (gap * lam) if gap > 0 else math.inf)
    return max(vals) if vals else math.nan


def cond_identifiability(models: Sequence[ModelAlpha], X, truth: TruthSpec) -> float:
    """Smallest per-observation squared bias over the models."""
    return min(delta_n(X, alpha, truth) for alpha in models)


def cond_misc(
    n: int,
    train_size: int,
    p: int,
    truth: TruthSpec | None = None,
    correct: Sequence[ModelAlpha] = (),
    alpha_c: ModelAlpha | None = None,
    m: int = DEFAULT_M,
) -> dict[str, float]:
    lam = lambda_n(n, train_size)
    out = {
        "lambda_n": lam,
        "train_fraction_log_n": train_size / n * math.log(n),
        "dimension_lambda_over_n": p * lam / n,
    }
    if truth is not None:
        out["mean_square_mu"] = float(truth.mu @ truth.mu) / n
    if alpha_c is not None:
        total = 0.0
        for alpha in correct:
            if alpha == alpha_c:
                continue
            gap = alpha.size - alpha_c.size
            total += math.inf if gap <= 0 else 1.0 / (lam ** (2 * m) * gap**m)
        out["sum_inverse_lambda_dimension_gap"] = total
        out["sum_inverse_dimension_correct"] = sum(1.0 / a.size**m for a in correct)
    return out


def training_bias_identity(X, alpha: ModelAlpha, mu, train_rows) -> dict[str, float]:
    """Terms of the bias split between a training sample and its complement.

    With ``(I - P) mu`` split into training rows ``A mu`` and validation rows
    ``B mu``, and ``X_c`` the validation rows of X(alpha):

    - ``total == train_rows_part + validation_rows_part``
    - ``total - training_bias == validation_rows_part + excess``

    where ``excess = (B mu)' X_c (X_1'X_1)^{-1} X_c' (B mu) >= 0``.
    """
    A = submatrix(X, alpha)
    mu = linalg.as_vector(mu, A.shape[0], "mu")
    rows = np.asarray(train_rows, dtype=np.intp)
    mask = np.ones(A.shape[0], dtype=bool)
    mask[rows] = False
    f = linalg.factor(A)
    f1 = linalg.factor(A[rows])
    res = linalg.residual(f, mu)
    a_mu = res[rows]
    b_mu = res[mask]
    res1 = linalg.residual(f1, mu[rows])
    f1.require_full_rank()
    w = solve_triangular(f1.r, A[mask].T @ b_mu, trans="T", lower=False)
    return {
        "total": float(res @ res),
        "training_bias": float(res1 @ res1),
        "train_rows_part": float(a_mu @ a_mu),
        "validation_rows_part": float(b_mu @ b_mu),
        "excess": float(w @ w),
    }


def training_bias_ratio(X, alpha: ModelAlpha, mu, scheme: TrainingScheme) -> float:
    """``mean_i mu_i'(I - P_i) mu_i / mu'(I - P) mu``.

    Never exceeds ``train_size / n`` for a balanced scheme; NaN when the
    model has no bias above rounding level.
    """
    A = submatrix(X, alpha)
    mu = linalg.as_vector(mu, A.shape[0], "mu")
    total = linalg.rss(linalg.factor(A), mu)
    if total <= _BIAS_FLOOR * max(float(mu @ mu), 1e-300):
        return math.nan
    parts = [linalg.rss(linalg.factor(A[rows]), mu[rows]) for rows in scheme.samples]
    return float(np.mean(parts)) / total


def empirical_uniform_ratios(
    models: Sequence[ModelAlpha],
    X,
    truth: TruthSpec,
    scheme: TrainingScheme,
    e,
    bias_ratios: dict[ModelAlpha, float] | None = None,
) -> dict[str, float]:
    """Realized maxima over models of the quantities the uniform-convergence arguments control.

    ``e`` is the error draw (``y = mu + e``).  ``bias_ratios`` may carry
    precomputed :func:`training_bias_ratio` values, which do not depend on e.
    """
    n = truth.n
    e = linalg.as_vector(e, n, "e")
    noise = cross = lr = 0.0
    bias = -math.inf
    for alpha in models:
        A = submatrix(X, alpha)
        f = linalg.factor(A)
        pe, _ = linalg.project(f, A, e)
        _, res_mu = linalg.project(f, A, truth.mu)
        nd = float(res_mu @ res_mu)
        nr = nd + truth.sigma2 * alpha.size
        epe = float(e @ pe)
        noise = max(noise, abs(epe - truth.sigma2 * alpha.size) / nr)
        cross = max(cross, abs(float(e @ res_mu)) / nr)
        err = res_mu - pe
        nl = float(err @ err)
        lr = max(lr, abs(nl / nr - 1.0))
        if bias_ratios is not None:
            b = bias_ratios.get(alpha, math.nan)
        else:
            b = training_bias_ratio(X, alpha, truth.mu, scheme) if nd > 0 else math.nan
        if not math.isnan(b):
            bias = max(bias, b)
    return {
        "noise_projection_ratio": noise,
        "cross_term_ratio": cross,
        "loss_risk_deviation": lr,
        "training_bias_ratio": bias if bias > -math.inf else math.nan,
        "training_bias_bound": scheme.train_size / n,
    }


def full_model_log_rss_positive(X, y, scheme: TrainingScheme) -> bool:
    """Whether ``sum_i log S_i`` of the full model (all columns) is positive."""
    X = linalg.as_matrix(X)
    y = linalg.as_vector(y, X.shape[0])
    total = 0.0
    for rows in scheme.samples:
        s = linalg.rss(linalg.factor(X[rows]), y[rows])
        if s <= 0:
            return False
        total += math.log(s)
    return total > 0


@dataclass
class ConditionReport:
    """Named finite-n diagnostics; ``None`` marks a value that is undefined."""

    values: dict[str, float | None]
    m: int
    regime: str
    notes: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "regime": self.regime,
            "values": dict(self.values),
            "notes": dict(self.notes),
        }


_NOTES = {
    "a_in_excess_ratio_correct_max": (
        "interpreted as a deterministic design ratio that should vanish; "
        "the underlying requirement is stated in probability"
    ),
}


def _clean(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def condition_report(
    models: Sequence[ModelAlpha],
    X,
    scheme: TrainingScheme,
    truth: TruthSpec | None = None,
    m: int = DEFAULT_M,
    correct_tol: float | None = None,
) -> ConditionReport:
    """Evaluate every design- and truth-dependent diagnostic that applies.

    Without a truth only design quantities (``a_in`` against ``p lambda``,
    ``lambda_n`` and the training-fraction rates) are reported.
    """
    X = linalg.as_matrix(X)
    n, p = X.shape
    models = list(models)
    vals: dict[str, float | None] = {}
    a_lam = cond_a_in(models, X, scheme, PN_LAMBDA)
    vals["a_in_dimension_ratio_max"] = a_lam.max_ratio
    vals["a_in_mean_max"] = a_lam.max_raw
    if truth is None:
        vals.update(cond_misc(n, scheme.train_size, p, m=m))
        return ConditionReport({k: _clean(v) for k, v in vals.items()}, m, "unknown")

    tol = default_correct_tol(truth.mu) if correct_tol is None else correct_tol
    deltas = {a: delta_n(X, a, truth) for a in models}
    correct = [a for a in models if deltas[a] <= tol]
    incorrect = [a for a in models if deltas[a] > tol]
    alpha_c = min(correct, key=lambda a: a.sort_key) if correct else None

    vals["sum_inverse_risk"] = cond_sum_inverse_risk(models, X, truth, m)
    vals["dimension_lambda_risk_ratio"] = cond_pn_lambda_ratio(models, X, truth, scheme.train_size, p)
    a_risk = cond_a_in(models, X, scheme, RISK, truth)
    vals["a_in_risk_ratio_max"] = a_risk.max_ratio
    vals["min_bias"] = min(deltas.values())
    vals.update(cond_misc(n, scheme.train_size, p, truth, correct, alpha_c, m))
    if incorrect:
        vals["sum_inverse_risk_incorrect"] = cond_sum_inverse_risk(incorrect, X, truth, m)
        vals["dimension_lambda_risk_ratio_incorrect"] = cond_pn_lambda_ratio(
            incorrect, X, truth, scheme.train_size, p
        )
    if correct:
        vals["a_in_dimension_ratio_correct_max"] = cond_a_in(correct, X, scheme, PN_LAMBDA).max_ratio
        vals["a_in_excess_ratio_correct_max"] = cond_a_in_excess(correct, X, scheme, alpha_c)
    regime = "model-true" if correct else "model-false"
    notes = {k: v for k, v in _NOTES.items() if k in vals}
    return ConditionReport({k: _clean(v) for k, v in vals.items()}, m, regime, notes)
