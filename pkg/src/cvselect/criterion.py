"""
Cross-validatory predictive criteria for normal linear models.

For a model ``alpha`` and a training sample ``i`` (rows ``t_i``, size
``n - k``) the cross-validatory predictive density is the density of the
validation block integrated against the posterior given the training block,
under the flat prior on the coefficients (known variance) or the ``1/sigma^2``
prior (unknown variance).  Both have closed forms in terms of

    S       residual sum of squares of the full-data fit,
    S_i     residual sum of squares of the fit on training sample i,
    ld      log|X'X|,  ld_i  log|X_i'X_i|.

The model score is the mean over training samples of the log predictive
density (log of the geometric mean).  Selection minimizes the equivalent
criteria below, which differ from ``-score`` by a scale and an
alpha-independent shift:

    known sigma^2:    S/n - mean(S_i)/n + (sigma^2/n) mean(ld - ld_i)
    unknown sigma^2:  log S - ((n-k)/n) mean(log S_i) + (1/n) mean(ld - ld_i)
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import linalg
from .errors import (
    AllModelsFailedError,
    CVSelectError,
    DomainError,
    InsufficientDegreesError,
    SingularGramError,
    ZeroResidualError,
)
from .models import ModelAlpha, pick_min, submatrix
from .schemes import TrainingScheme

KNOWN = "known-sigma"
UNKNOWN = "unknown-sigma"
VARIANTS = (KNOWN, UNKNOWN)

# RSS below this fraction of ||y||^2 is treated as an exact interpolation
_ZERO_RSS_RTOL = 1e-26


def lambda_n(n: int, train_size: int) -> float:
    """``log(n / (n - k))`` with ``n - k = train_size``."""
    if not 1 <= train_size < n:
        raise DomainError(f"need 1 <= train_size < n, got train_size={train_size}, n={n}")
    return math.log(n / train_size)


def _check_variant(variant: str) -> str:
    if variant not in VARIANTS:
        raise DomainError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    return variant


def _check_sigma2(sigma2) -> float:
    if sigma2 is None or not np.isfinite(sigma2) or sigma2 <= 0:
        raise DomainError(f"sigma2 must be a positive finite number, got {sigma2!r}")
    return float(sigma2)


def _log_rss(value: float, scale: float, what: str) -> float:
    if value <= _ZERO_RSS_RTOL * max(scale, 1e-300):
        raise ZeroResidualError(f"{what} is zero; its logarithm is undefined")
    return math.log(value)


@dataclass(frozen=True, eq=False)
class PreparedModel:
    """Factorizations of X(alpha) on all rows and on every training sample.

    These depend only on the design, so Monte Carlo loops build them once
    and reuse them across response draws.
    """

    alpha: ModelAlpha
    scheme: TrainingScheme
    full: linalg.GramFactor
    train: tuple[linalg.GramFactor, ...]
    log_det_full: float
    log_det_train: np.ndarray

    @property
    def n(self) -> int:
        return self.scheme.n

    @property
    def size(self) -> int:
        return self.alpha.size

    @property
    def log_det_ratio(self) -> np.ndarray:
        """``log|X'X| - log|X_i'X_i|`` for every training sample."""
        return self.log_det_full - self.log_det_train

    def a_in(self) -> np.ndarray:
        p, n, m = self.size, self.n, self.scheme.train_size
        return p * math.log(m) - p * math.log(n) + self.log_det_ratio

    def residual_sums(self, y: np.ndarray) -> tuple[float, np.ndarray]:
        S = linalg.rss(self.full, y)
        Si = np.array(
            [linalg.rss(f, y[rows]) for f, rows in zip(self.train, self.scheme.samples)]
        )
        return S, Si


def prepare_model(X, alpha: ModelAlpha, scheme: TrainingScheme) -> PreparedModel:
    X = linalg.as_matrix(X)
    if X.shape[0] != scheme.n:
        raise linalg.DimensionError(f"X has {X.shape[0]} rows but the scheme has n={scheme.n}")
    if scheme.train_size < alpha.size:
        raise SingularGramError(
            f"training samples of size {scheme.train_size} cannot support model {alpha} "
            f"of dimension {alpha.size}"
        )
    A = submatrix(X, alpha)
    full = linalg.factor(A)
    train = tuple(linalg.factor(A[rows]) for rows in scheme.samples)
    ld_full = linalg.log_det_gram(full)
    ld_train = np.array([linalg.log_det_gram(f) for f in train])
    return PreparedModel(alpha, scheme, full, train, ld_full, ld_train)


def a_in(X, alpha: ModelAlpha, train_rows) -> float:
    """Log-determinant discrepancy of one training sample relative to the full data.

    Zero when ``X_i'X_i`` is exactly ``((n-k)/n) X'X``.
    """
    A = submatrix(X, alpha)
    rows = np.asarray(train_rows, dtype=np.intp)
    n, p, m = A.shape[0], alpha.size, rows.shape[0]
    ld = linalg.log_det_gram(linalg.factor(A))
    ld_i = linalg.log_det_gram(linalg.factor(A[rows]))
    return p * math.log(m) - p * math.log(n) + ld - ld_i


def _pieces(X, y, alpha, train_rows):
    A = submatrix(X, alpha)
    y = linalg.as_vector(y, A.shape[0])
    rows = np.asarray(train_rows, dtype=np.intp)
    n, m = A.shape[0], rows.shape[0]
    if not 1 <= m < n:
        raise DomainError(f"training sample size must be in [1, n), got {m}")
    full = linalg.factor(A)
    tr = linalg.factor(A[rows])
    full.require_full_rank()
    tr.require_full_rank()
    S = linalg.rss(full, y)
    Si = linalg.rss(tr, y[rows])
    ld = linalg.log_det_gram(full)
    ld_i = linalg.log_det_gram(tr)
    return y, n, m, S, Si, ld, ld_i


def log_cv_predictive_known_sigma(X, y, alpha: ModelAlpha, train_rows, sigma2: float) -> float:
    """Log predictive density of the validation block given training rows, sigma^2 known.

    The validation responses are normal with mean ``X_v beta_i`` and
    covariance ``sigma^2 (I + X_v (X_i'X_i)^{-1} X_v')``; the log-determinant
    of that covariance factor is ``ld - ld_i`` and its quadratic form equals
    ``S - S_i``.
    """
    sigma2 = _check_sigma2(sigma2)
    _, n, m, S, Si, ld, ld_i = _pieces(X, y, alpha, train_rows)
    k = n - m
    return -0.5 * k * math.log(2 * math.pi * sigma2) - 0.5 * (ld - ld_i) - (S - Si) / (2 * sigma2)


def log_cv_predictive_unknown_sigma(
    X, y, alpha: ModelAlpha, train_rows, exact: bool = False
) -> float:
    """Log predictive density of the validation block, sigma^2 unknown (prior 1/sigma^2).

    With ``exact=False`` returns the alpha-comparable core
    ``(ld_i - ld)/2 - (n/2) log S + ((n-k)/2) log S_i`` that the selection
    criterion is built from.  With ``exact=True`` returns the normalized
    log density

        -(k/2) log(pi) + (ld_i - ld)/2 + lgamma((n-p)/2) - lgamma((n-k-p)/2)
        - ((n-p)/2) log S + ((n-k-p)/2) log S_i

    whose residual exponents carry the model dimension ``p``.
    """
    p = alpha.size
    y, n, m, S, Si, ld, ld_i = _pieces(X, y, alpha, train_rows)
    if m <= p:
        raise InsufficientDegreesError(
            f"train_size {m} must exceed the model dimension {p} (need train_size >= p + 1)"
        )
    k = n - m
    log_S = _log_rss(S, float(y @ y), "full-data RSS")
    log_Si = _log_rss(Si, float(y[np.asarray(train_rows)] @ y[np.asarray(train_rows)]), "training RSS")
    if not exact:
        return 0.5 * (ld_i - ld) - 0.5 * n * log_S + 0.5 * m * log_Si
    return (
        -0.5 * k * math.log(math.pi)
        + 0.5 * (ld_i - ld)
        + math.lgamma(0.5 * (n - p))
        - math.lgamma(0.5 * (m - p))
        - 0.5 * (n - p) * log_S
        + 0.5 * (m - p) * log_Si
    )


def cv_score(
    X,
    y,
    alpha: ModelAlpha,
    scheme: TrainingScheme,
    variant: str,
    sigma2: float | None = None,
    exact: bool = True,
) -> float:
    """Mean over training samples of the log cross-validatory predictive density."""
    _check_variant(variant)
    if variant == KNOWN:
        vals = [
            log_cv_predictive_known_sigma(X, y, alpha, rows, sigma2) for rows in scheme.samples
        ]
    else:
        vals = [
            log_cv_predictive_unknown_sigma(X, y, alpha, rows, exact=exact)
            for rows in scheme.samples
        ]
    return float(np.mean(vals))


@dataclass(frozen=True)
class CriterionValue:
    """Criterion value of one model with its three additive components.

    ``components`` holds (full-data term, training-average term,
    determinant term); ``value`` is their sum.
    """

    alpha: ModelAlpha
    value: float
    variant: str
    components: tuple[float, float, float]

    def to_dict(self) -> dict:
        full, train, det = self.components
        return {
            "model": list(self.alpha.columns),
            "value": self.value,
            "full_term": full,
            "training_term": train,
            "determinant_term": det,
        }


def _prepared(X, alpha, scheme, prepared):
    if prepared is not None:
        return prepared
    return prepare_model(X, alpha, scheme)


def gamma_known(
    X, y, alpha: ModelAlpha, scheme: TrainingScheme, sigma2: float, *, prepared=None
) -> CriterionValue:
    sigma2 = _check_sigma2(sigma2)
    pm = _prepared(X, alpha, scheme, prepared)
    y = linalg.as_vector(y, scheme.n)
    n = scheme.n
    S, Si = pm.residual_sums(y)
    full = S / n
    train = -float(np.mean(Si)) / n
    det = sigma2 * float(np.mean(pm.log_det_ratio)) / n
    return CriterionValue(alpha, full + train + det, KNOWN, (full, train, det))


def _unknown_logs(pm: PreparedModel, y: np.ndarray):
    if pm.scheme.train_size <= pm.size:
        raise InsufficientDegreesError(
            f"train_size {pm.scheme.train_size} must exceed the dimension {pm.size} "
            f"of model {pm.alpha} (need train_size >= p + 1)"
        )
    S, Si = pm.residual_sums(y)
    yy = float(y @ y)
    log_S = _log_rss(S, yy, f"full-data RSS of model {pm.alpha}")
    log_Si = np.array(
        [
            _log_rss(s, float(y[rows] @ y[rows]), f"training RSS of model {pm.alpha}")
            for s, rows in zip(Si, pm.scheme.samples)
        ]
    )
    return log_S, log_Si


def gamma_unknown(
    X, y, alpha: ModelAlpha, scheme: TrainingScheme, *, prepared=None
) -> CriterionValue:
    pm = _prepared(X, alpha, scheme, prepared)
    y = linalg.as_vector(y, scheme.n)
    n, m = scheme.n, scheme.train_size
    log_S, log_Si = _unknown_logs(pm, y)
    full = log_S
    train = -(m / n) * float(np.mean(log_Si))
    det = float(np.mean(pm.log_det_ratio)) / n
    return CriterionValue(alpha, full + train + det, UNKNOWN, (full, train, det))


def gamma1_unknown(
    X, y, alpha: ModelAlpha, scheme: TrainingScheme, sigma2_ref: float, *, prepared=None
) -> float:
    """Unknown-variance criterion rescaled by a reference variance.

    Differs from :func:`gamma_unknown` by ``(k/n) log(n * sigma2_ref)``,
    which does not depend on the model, so both have the same minimizer.
    """
    sigma2_ref = _check_sigma2(sigma2_ref)
    pm = _prepared(X, alpha, scheme, prepared)
    y = linalg.as_vector(y, scheme.n)
    n, m = scheme.n, scheme.train_size
    log_S, log_Si = _unknown_logs(pm, y)
    c = math.log(n * sigma2_ref)
    return (
        (log_S - c)
        - (m / n) * float(np.mean(log_Si - c))
        + float(np.mean(pm.a_in())) / n
        + pm.size * lambda_n(n, m) / n
    )


def evaluate(
    pm: PreparedModel, y: np.ndarray, variant: str, sigma2: float | None = None
) -> CriterionValue:
    if variant == KNOWN:
        return gamma_known(None, y, pm.alpha, pm.scheme, sigma2, prepared=pm)
    return gamma_unknown(None, y, pm.alpha, pm.scheme, prepared=pm)


@dataclass
class SelectionReport:
    values: list[CriterionValue]
    selected: ModelAlpha
    tie_broken: bool
    variant: str
    failed: dict[ModelAlpha, str] = field(default_factory=dict)

    def value_of(self, alpha: ModelAlpha) -> float:
        for v in self.values:
            if v.alpha == alpha:
                return v.value
        raise KeyError(alpha)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "selected": list(self.selected.columns),
            "tie_broken": self.tie_broken,
            "criterion": [v.to_dict() for v in self.values],
            "failed": [
                {"model": list(a.columns), "reason": msg} for a, msg in self.failed.items()
            ],
        }


def select_model(
    space: Iterable[ModelAlpha],
    X,
    y,
    scheme: TrainingScheme,
    variant: str | None = None,
    sigma2: float | None = None,
    *,
    prepared: dict[ModelAlpha, PreparedModel] | None = None,
    tie_tol: float = 1e-10,
) -> SelectionReport:
    """Pick the model minimizing the criterion (maximizing the CV score).

    Models whose evaluation fails (singular training Gram, zero residuals,
    too few degrees of freedom) are excluded with a warning.  Ties within
    ``tie_tol`` (relative) go to the smallest model, then lexicographic order.
    """
    if variant is None:
        variant = KNOWN if sigma2 is not None else UNKNOWN
    _check_variant(variant)
    if variant == KNOWN:
        sigma2 = _check_sigma2(sigma2)
    y = linalg.as_vector(y, scheme.n)
    if prepared is None:
        X = linalg.as_matrix(X)
    values: list[CriterionValue] = []
    failed: dict[ModelAlpha, str] = {}
    for alpha in space:
        try:
            pm = prepared[alpha] if prepared is not None else prepare_model(X, alpha, scheme)
            values.append(evaluate(pm, y, variant, sigma2))
        except CVSelectError as exc:
            failed[alpha] = f"{type(exc).__name__}: {exc}"
    if failed:
        warnings.warn(
            f"{len(failed)} model(s) could not be evaluated and were excluded: "
            + "; ".join(f"{a}: {m}" for a, m in failed.items()),
            RuntimeWarning,
            stacklevel=2,
        )
    if not values:
        raise AllModelsFailedError("no model in the space could be evaluated")
    selected, tie = pick_min([(v.alpha, v.value) for v in values], tie_tol)
    return SelectionReport(values, selected, tie, variant, failed)


def predict_future(X, y, alpha: ModelAlpha) -> np.ndarray:
    """Least-squares prediction ``X(alpha) beta_hat(alpha) = P(alpha) y``."""
    A = submatrix(X, alpha)
    f = linalg.factor(A)
    pv, _ = linalg.project(f, A, y)
    return pv
