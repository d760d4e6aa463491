"""
Least-squares machinery built on the thin QR factorization.

Every quantity the selection criteria need (fitted values, residual sums of
squares, log-determinants of Gram matrices, projections) is obtained from
``X = QR`` without ever forming ``(X'X)^{-1}`` or an explicit projection
matrix.  The design can be tall (n in the thousands) while the number of
columns stays small, so the cost of a factorization is O(n p^2).

Conventions
-----------
- ``R`` is normalized to a nonnegative diagonal, so a 1x1 factor of a column
  of ones is ``+sqrt(n)``.
- A factor is full rank when every ``|R_jj|`` exceeds
  ``RANK_RTOL * max_j |R_jj|``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionError, SingularGramError

RANK_RTOL = 1e-10


def as_matrix(X, name: str = "X") -> np.ndarray:
    """Validate and return ``X`` as a finite 2-D float64 array."""
    A = np.asarray(X, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise DimensionError(f"{name} must be 2-dimensional, got shape {A.shape}")
    if A.size == 0:
        raise DimensionError(f"{name} is empty")
    if not np.all(np.isfinite(A)):
        raise DimensionError(f"{name} contains non-finite entries")
    return A


def as_vector(v, length: int | None = None, name: str = "y") -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1:
        a = a.reshape(-1)
    if length is not None and a.shape[0] != length:
        raise DimensionError(f"{name} has length {a.shape[0]}, expected {length}")
    if not np.all(np.isfinite(a)):
        raise DimensionError(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class GramFactor:
    """Thin QR factor of an m x p matrix; ``R'R`` equals the Gram matrix ``X'X``."""

    q: np.ndarray
    r: np.ndarray
    rank: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.q.shape[0], self.r.shape[1]

    @property
    def full_rank(self) -> bool:
        return self.rank == self.r.shape[1]

    def require_full_rank(self) -> None:
        if not self.full_rank:
            m, p = self.shape
            raise SingularGramError(
                f"Gram matrix of a {m}x{p} design is singular "
                f"(numerical rank {self.rank} < {p})"
            )


@dataclass(frozen=True)
class FitSummary:
    beta_hat: np.ndarray
    fitted: np.ndarray
    rss: float
    log_det_gram: float


def factor(X) -> GramFactor:
    """Orthogonal factorization of ``X`` with a numerical rank indicator.

    Raises
    ------
    DimensionError
        If ``X`` has fewer rows than columns.
    """
    X = as_matrix(X)
    m, p = X.shape
    if m < p:
        raise DimensionError(f"factor needs rows >= cols, got {m}x{p}")
    q, r = np.linalg.qr(X, mode="reduced")
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs
    r = r * signs[:, None]
    d = np.abs(np.diag(r))
    dmax = d.max()
    rank = int(np.count_nonzero(d > RANK_RTOL * dmax)) if dmax > 0 else 0
    return GramFactor(q=q, r=r, rank=rank)


def log_det_gram(f: GramFactor) -> float:
    """``log|X'X| = 2 * sum_j log R_jj``."""
    f.require_full_rank()
    return float(2.0 * np.sum(np.log(np.diag(f.r))))


def project(f: GramFactor, X, v) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(Pv, v - Pv)`` for the orthogonal projection onto span(X).

    ``X`` is accepted for interface symmetry with :func:`ls_fit`; the
    projection itself only needs the orthonormal factor.
    """
    f.require_full_rank()
    v = as_vector(v, f.shape[0], "v")
    pv = f.q @ (f.q.T @ v)
    return pv, v - pv


def residual(f: GramFactor, v) -> np.ndarray:
    f.require_full_rank()
    v = np.asarray(v, dtype=np.float64)
    return v - f.q @ (f.q.T @ v)


def rss(f: GramFactor, v) -> float:
    """Residual sum of squares of ``v`` after projecting onto span(X)."""
    res = residual(f, v)
    return float(res @ res)


def ls_fit(f: GramFactor, X, y) -> FitSummary:
    f.require_full_rank()
    X = as_matrix(X)
    y = as_vector(y, X.shape[0])
    qty = f.q.T @ y
    beta = solve_triangular(f.r, qty, lower=False)
    fitted = X @ beta
    res = y - fitted
    return FitSummary(
        beta_hat=beta,
        fitted=fitted,
        rss=float(res @ res),
        log_det_gram=log_det_gram(f),
    )


def solve_gram(f: GramFactor, b) -> np.ndarray:
    """Solve ``(X'X) z = b`` through two triangular solves."""
    f.require_full_rank()
    w = solve_triangular(f.r, b, trans="T", lower=False)
    return solve_triangular(f.r, w, lower=False)
