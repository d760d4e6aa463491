"""Truth-aware quantities: loss, squared bias, risk, oracle and parsimonious correct models."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import linalg
from .errors import AllModelsFailedError, CVSelectError, DomainError
from .models import ModelAlpha, default_correct_tol, pick_min, submatrix
from .schemes import TrainingScheme


@dataclass(frozen=True, eq=False)
class TruthSpec:
    """True mean vector and error variance of the data-generating process."""

    mu: np.ndarray
    sigma2: float

    def __post_init__(self):
        mu = linalg.as_vector(self.mu, name="mu")
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise DomainError(f"sigma2 must be positive, got {self.sigma2}")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma2", float(self.sigma2))

    @property
    def n(self) -> int:
        return self.mu.shape[0]


def _factor(X, alpha):
    A = submatrix(X, alpha)
    f = linalg.factor(A)
    f.require_full_rank()
    return A, f


def loss(X, y, alpha: ModelAlpha, truth: TruthSpec) -> float:
    """``||mu - P(alpha) y||^2 / n``."""
    A, f = _factor(X, alpha)
    fitted, _ = linalg.project(f, A, y)
    d = truth.mu - fitted
    return float(d @ d) / truth.n


def delta_n(X, alpha: ModelAlpha, truth: TruthSpec) -> float:
    """Per-observation squared bias ``mu'(I - P(alpha)) mu / n``."""
    _, f = _factor(X, alpha)
    return linalg.rss(f, truth.mu) / truth.n


def risk(X, alpha: ModelAlpha, truth: TruthSpec) -> float:
    """Expected loss: squared bias plus ``sigma^2 p(alpha) / n``."""
    return delta_n(X, alpha, truth) + truth.sigma2 * alpha.size / truth.n


def oracle_model(
    space: Iterable[ModelAlpha], X, y, truth: TruthSpec, tie_tol: float = 1e-10
) -> ModelAlpha:
    """Model with the smallest loss, ties broken as in model selection."""
    scored = []
    for alpha in space:
        try:
            scored.append((alpha, loss(X, y, alpha, truth)))
        except CVSelectError:
            continue
    if not scored:
        raise AllModelsFailedError("no model in the space could be evaluated")
    return pick_min(scored, tie_tol)[0]


def correct_models(
    space: Iterable[ModelAlpha], X, truth: TruthSpec, tol: float | None = None
) -> list[ModelAlpha]:
    if tol is None:
        tol = default_correct_tol(truth.mu)
    out = []
    for alpha in space:
        try:
            if delta_n(X, alpha, truth) <= tol:
                out.append(alpha)
        except CVSelectError:
            continue
    return out


def parsimonious_correct(
    space: Iterable[ModelAlpha], X, truth: TruthSpec, tol: float | None = None
) -> ModelAlpha | None:
    """Smallest correct model (lexicographic among equals), or None if none is correct."""
    correct = correct_models(space, X, truth, tol)
    if not correct:
        return None
    return min(correct, key=lambda a: a.sort_key)


@dataclass(frozen=True)
class ModelLoss:
    alpha: ModelAlpha
    loss: float
    delta: float
    risk: float


@dataclass
class LossProfile:
    entries: list[ModelLoss]
    oracle: ModelAlpha
    parsimonious_correct: ModelAlpha | None
    correct: list[ModelAlpha] = field(default_factory=list)

    def loss_of(self, alpha: ModelAlpha) -> float:
        for e in self.entries:
            if e.alpha == alpha:
                return e.loss
        raise KeyError(alpha)

    @property
    def min_loss(self) -> float:
        return min(e.loss for e in self.entries)


def loss_profile(
    space: Sequence[ModelAlpha],
    X,
    y,
    truth: TruthSpec,
    tol: float | None = None,
    tie_tol: float = 1e-10,
) -> LossProfile:
    if tol is None:
        tol = default_correct_tol(truth.mu)
    y = linalg.as_vector(y, truth.n)
    entries = []
    for alpha in space:
        A, f = _factor(X, alpha)
        fitted, _ = linalg.project(f, A, y)
        d = truth.mu - fitted
        delta = linalg.rss(f, truth.mu) / truth.n
        entries.append(
            ModelLoss(alpha, float(d @ d) / truth.n, delta, delta + truth.sigma2 * alpha.size / truth.n)
        )
    if not entries:
        raise AllModelsFailedError("empty model space")
    oracle = pick_min([(e.alpha, e.loss) for e in entries], tie_tol)[0]
    correct = [e.alpha for e in entries if e.delta <= tol]
    pc = min(correct, key=lambda a: a.sort_key) if correct else None
    return LossProfile(entries, oracle, pc, correct)


def full_rss_decomposition(X, y, alpha: ModelAlpha, truth: TruthSpec) -> dict[str, float]:
    """Split ``S(alpha)/n`` into noise, loss, and cross terms.

    ``lhs == noise + loss - 2 e'Pe/n + 2 e'(I-P)mu/n`` with ``e = y - mu``.
    """
    A, f = _factor(X, alpha)
    y = linalg.as_vector(y, truth.n)
    n = truth.n
    e = y - truth.mu
    pe, _ = linalg.project(f, A, e)
    _, res_mu = linalg.project(f, A, truth.mu)
    fitted, res_y = linalg.project(f, A, y)
    d = truth.mu - fitted
    return {
        "lhs": float(res_y @ res_y) / n,
        "noise": float(e @ e) / n,
        "loss": float(d @ d) / n,
        "projected_noise": -2.0 * float(e @ pe) / n,
        "cross": 2.0 * float(e @ res_mu) / n,
    }


def training_rss_decomposition(
    X, y, alpha: ModelAlpha, truth: TruthSpec, scheme: TrainingScheme
) -> dict[str, float]:
    """Split ``mean_i S_i(alpha) / n`` into noise, bias, projected-noise and cross terms.

    The noise term is ``((n-k)/n^2) e'e``, which relies on the scheme being
    balanced.
    """
    A = submatrix(X, alpha)
    y = linalg.as_vector(y, truth.n)
    n, m, r = scheme.n, scheme.train_size, scheme.r
    e = y - truth.mu
    lhs = bias = proj = cross = 0.0
    for rows in scheme.samples:
        f = linalg.factor(A[rows])
        f.require_full_rank()
        res_y = linalg.residual(f, y[rows])
        res_mu = linalg.residual(f, truth.mu[rows])
        ei = e[rows]
        lhs += float(res_y @ res_y)
        bias += float(res_mu @ res_mu)
        proj += float(ei @ (ei - linalg.residual(f, ei)))
        cross += float(ei @ res_mu)
    return {
        "lhs": lhs / (n * r),
        "noise": m * float(e @ e) / n**2,
        "bias": bias / (n * r),
        "projected_noise": -proj / (n * r),
        "cross": 2.0 * cross / (n * r),
    }


def u_n(e, loss_value: float, sigma2: float) -> float:
    """``log(e'e/(n sigma^2) + loss/sigma^2)``, the target the rescaled criterion tracks."""
    e = np.asarray(e, dtype=np.float64)
    return math.log(float(e @ e) / (e.shape[0] * sigma2) + loss_value / sigma2)
