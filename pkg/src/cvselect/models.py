"""Candidate model spaces: subsets of design columns and their submatrices."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import linalg
from .errors import ModelSpaceError

DEFAULT_MAX_MODELS = 10**6


@dataclass(frozen=True, order=True)
class ModelAlpha:
    """A candidate model: a sorted tuple of 1-based column indices.

    Ordering is lexicographic on the column tuple.  Use :attr:`sort_key`
    when parsimony should come first.
    """

    columns: tuple[int, ...]

    def __post_init__(self):
        cols = tuple(int(c) for c in self.columns)
        if not cols:
            raise ModelSpaceError("a model needs at least one column")
        if any(c < 1 for c in cols):
            raise ModelSpaceError(f"column indices are 1-based, got {cols}")
        if len(set(cols)) != len(cols):
            raise ModelSpaceError(f"duplicate column index in {cols}")
        object.__setattr__(self, "columns", tuple(sorted(cols)))

    @classmethod
    def of(cls, *columns: int) -> "ModelAlpha":
        return cls(tuple(columns))

    @property
    def size(self) -> int:
        return len(self.columns)

    @property
    def index(self) -> np.ndarray:
        """0-based column positions, for numpy indexing."""
        return np.asarray(self.columns, dtype=np.intp) - 1

    @property
    def sort_key(self) -> tuple:
        return (self.size, self.columns)

    def issubset(self, other: "ModelAlpha") -> bool:
        return set(self.columns) <= set(other.columns)

    @property
    def label(self) -> str:
        return "+".join(str(c) for c in self.columns)

    def __str__(self) -> str:
        return "{" + ",".join(str(c) for c in self.columns) + "}"


@dataclass(frozen=True)
class ModelSpace:
    models: tuple[ModelAlpha, ...]
    p: int

    def __post_init__(self):
        if not self.models:
            raise ModelSpaceError("model space is empty")
        if len(set(self.models)) != len(self.models):
            raise ModelSpaceError("model space contains duplicate models")
        for m in self.models:
            if m.columns[-1] > self.p:
                raise ModelSpaceError(f"model {m} refers to a column beyond p={self.p}")

    def __iter__(self):
        return iter(self.models)

    def __len__(self):
        return len(self.models)

    def __getitem__(self, i):
        return self.models[i]

    @property
    def max_size(self) -> int:
        return max(m.size for m in self.models)

    def subspace(self, models: Iterable[ModelAlpha]) -> list[ModelAlpha]:
        keep = set(models)
        return [m for m in self.models if m in keep]


def enumerate_models(
    mode: str,
    p: int,
    *,
    max_size: int | None = None,
    models: Sequence[Sequence[int]] | None = None,
    cap: int = DEFAULT_MAX_MODELS,
) -> ModelSpace:
    """Build a model space.

    Parameters
    ----------
    mode : {"all-subsets", "nested", "explicit"}
    p : int
        Number of columns of the full design.
    max_size : int, optional
        Largest subset size for ``all-subsets`` (default ``p``).
    models : sequence of sequences of int, optional
        1-based column lists for ``explicit``.
    cap : int
        Refuse to build spaces with more than this many models.
    """
    if p < 1:
        raise ModelSpaceError(f"p must be >= 1, got {p}")
    if mode == "nested":
        out = [ModelAlpha(tuple(range(1, j + 1))) for j in range(1, p + 1)]
    elif mode == "all-subsets":
        s_max = p if max_size is None else int(max_size)
        if not 1 <= s_max <= p:
            raise ModelSpaceError(f"max_size must be in [1, {p}], got {s_max}")
        count = sum(math.comb(p, s) for s in range(1, s_max + 1))
        if count > cap:
            raise ModelSpaceError(f"all-subsets space has {count} models, cap is {cap}")
        out = [
            ModelAlpha(c)
            for s in range(1, s_max + 1)
            for c in itertools.combinations(range(1, p + 1), s)
        ]
    elif mode == "explicit":
        if not models:
            raise ModelSpaceError("explicit model list is empty")
        out = []
        for cols in models:
            cols = [int(c) for c in cols]
            if any(c < 1 or c > p for c in cols):
                raise ModelSpaceError(f"invalid column index in {cols} (p={p})")
            out.append(ModelAlpha(tuple(cols)))
        if len(out) > cap:
            raise ModelSpaceError(f"explicit space has {len(out)} models, cap is {cap}")
    else:
        raise ModelSpaceError(f"unknown model-space mode {mode!r}")
    return ModelSpace(tuple(out), p)


def submatrix(X, alpha: ModelAlpha, rows=None) -> np.ndarray:
    """Rows ``rows`` (0-based, order preserved) and columns ``alpha`` of X."""
    X = linalg.as_matrix(X)
    n, p = X.shape
    if alpha.columns[-1] > p:
        raise IndexError(f"model {alpha} exceeds the {p} columns of X")
    cols = alpha.index
    if rows is None:
        return X[:, cols]
    rows = np.asarray(rows, dtype=np.intp)
    if rows.size and (rows.min() < 0 or rows.max() >= n):
        raise IndexError(f"row index out of range for n={n}")
    return X[np.ix_(rows, cols)]


def default_correct_tol(mu) -> float:
    mu = np.asarray(mu, dtype=np.float64)
    return 1e-10 * (float(mu @ mu) / mu.shape[0] + 1.0)


def is_correct_model(alpha: ModelAlpha, mu, X, tol: float | None = None) -> bool:
    """True when ``mu`` lies in span X(alpha), i.e. the per-observation bias is <= tol."""
    A = submatrix(X, alpha)
    mu = linalg.as_vector(mu, A.shape[0], "mu")
    if tol is None:
        tol = default_correct_tol(mu)
    f = linalg.factor(A)
    return linalg.rss(f, mu) / mu.shape[0] <= tol


def pick_min(scored: Sequence[tuple[ModelAlpha, float]], tie_tol: float = 1e-10):
    """Minimizer of the scores with parsimonious tie-breaking.

    Scores within ``tie_tol * max(1, |min|)`` of the minimum count as tied;
    among tied models the smallest wins, then the lexicographically first.
    Returns ``(model, tie_broken)``.
    """
    if not scored:
        raise ModelSpaceError("nothing to minimize over")
    best = min(v for _, v in scored)
    cutoff = best + tie_tol * max(1.0, abs(best))
    tied = sorted((a for a, v in scored if v <= cutoff), key=lambda a: a.sort_key)
    return tied[0], len(tied) > 1
