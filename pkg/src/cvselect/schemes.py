"""Training-sample schemes.

A scheme is a list of ``r`` training samples of equal size ``n - k`` drawn
from the row indices ``0..n-1``.  The validation block of each sample is its
complement.  The averaging arguments behind the criterion need every row to
appear in the same number of training samples ("balance"); both generators
here guarantee it, and :func:`validate_scheme` checks hand-built schemes.

Row indices are 0-based throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BalanceInfeasibleError, DivisibilityError, SchemeError


@dataclass(frozen=True, eq=False)
class TrainingScheme:
    n: int
    samples: tuple[np.ndarray, ...]
    kind: str = "custom"
    train_size: int = field(init=False)

    def __post_init__(self):
        if self.n < 2:
            raise SchemeError(f"need n >= 2, got {self.n}")
        if not self.samples:
            raise SchemeError("a scheme needs at least one training sample")
        samples = tuple(np.asarray(s, dtype=np.intp) for s in self.samples)
        size = samples[0].shape[0]
        for s in samples:
            if s.ndim != 1 or s.shape[0] != size:
                raise SchemeError("training samples must all have the same size")
            if s.size and (s.min() < 0 or s.max() >= self.n):
                raise SchemeError(f"training index out of range for n={self.n}")
            if np.unique(s).shape[0] != size:
                raise SchemeError("training sample has repeated indices")
        if not 1 <= size < self.n:
            raise SchemeError(f"train_size must satisfy 1 <= train_size < n, got {size} (n={self.n})")
        for s in samples:
            s.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "train_size", int(size))

    @property
    def r(self) -> int:
        return len(self.samples)

    @property
    def k(self) -> int:
        """Validation block size."""
        return self.n - self.train_size

    @property
    def coverage(self) -> np.ndarray:
        counts = np.zeros(self.n, dtype=np.int64)
        for s in self.samples:
            counts[s] += 1
        return counts

    @property
    def balanced(self) -> bool:
        c = self.coverage
        return bool(c.min() == c.max())

    def same_samples(self, other: "TrainingScheme") -> bool:
        return (
            self.n == other.n
            and self.r == other.r
            and all(np.array_equal(a, b) for a, b in zip(self.samples, other.samples))
        )

    def validation(self, i: int) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        mask[self.samples[i]] = False
        return np.flatnonzero(mask)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "train_size": self.train_size,
            "r": self.r,
            "k": self.k,
        }


def disjoint_scheme(n: int, train_size: int) -> TrainingScheme:
    """Consecutive disjoint blocks of ``train_size`` rows covering 0..n-1 once."""
    if train_size < 1:
        raise SchemeError(f"train_size must be >= 1, got {train_size}")
    if train_size >= n:
        raise SchemeError(f"train_size must be < n, got {train_size} (n={n})")
    if n % train_size:
        raise DivisibilityError(
            f"disjoint scheme needs train_size to divide n: {train_size} does not divide {n}"
        )
    r = n // train_size
    samples = tuple(np.arange(i * train_size, (i + 1) * train_size) for i in range(r))
    return TrainingScheme(n, samples, kind="disjoint")


def rotation_scheme(n: int, train_size: int, r: int) -> TrainingScheme:
    """Sample ``i`` is ``{(i*train_size + j) mod n : j < train_size}``.

    Balanced exactly when ``n`` divides ``r * train_size``; the coverage is
    then ``r * train_size / n``.
    """
    if not 1 <= train_size < n:
        raise SchemeError(f"train_size must satisfy 1 <= train_size < n, got {train_size} (n={n})")
    if r < 1:
        raise SchemeError(f"r must be >= 1, got {r}")
    if (r * train_size) % n:
        raise BalanceInfeasibleError(
            f"rotation scheme with r={r}, train_size={train_size} cannot be balanced: "
            f"{r * train_size} is not divisible by n={n}"
        )
    base = np.arange(train_size)
    samples = tuple((i * train_size + base) % n for i in range(r))
    return TrainingScheme(n, samples, kind="rotation")


def minimal_rotation_r(n: int, train_size: int) -> int:
    """Smallest r making the rotation scheme balanced."""
    return n // math.gcd(n, train_size)


@dataclass(frozen=True)
class SchemeValidation:
    balanced: bool
    size_ok: bool
    coverage_min: int
    coverage_max: int
    train_size: int
    margin: int

    @property
    def ok(self) -> bool:
        return self.balanced and self.size_ok

    def messages(self) -> list[str]:
        out = []
        if not self.balanced:
            out.append(
                f"scheme is unbalanced: per-row coverage ranges from "
                f"{self.coverage_min} to {self.coverage_max}"
            )
        if not self.size_ok:
            out.append(
                f"train_size {self.train_size} is below the required margin {self.margin} "
                f"(largest model size + 1)"
            )
        return out


def validate_scheme(s: TrainingScheme, min_model_size_margin: int) -> SchemeValidation:
    """Report balance and whether ``train_size >= min_model_size_margin``; never raises."""
    c = s.coverage
    return SchemeValidation(
        balanced=bool(c.min() == c.max()),
        size_ok=s.train_size >= min_model_size_margin,
        coverage_min=int(c.min()),
        coverage_max=int(c.max()),
        train_size=s.train_size,
        margin=int(min_model_size_margin),
    )
