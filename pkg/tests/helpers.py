"""Shared builders for random regression instances and the acceptance log."""

from cvselect.schemes import disjoint_scheme


def random_design(rng, n, p, intercept=True):
    X = rng.standard_normal((n, p))
    if intercept:
        X[:, 0] = 1.0
    return X


def divisors_between(n, lo, hi):
    return [d for d in range(lo, hi + 1) if n % d == 0]


def random_instance(rng, n_range=(24, 120), p_max=4, min_margin=2):
    """Random (X, y, disjoint scheme) with at least two training samples."""
    while True:
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        p = int(rng.integers(1, p_max + 1))
        sizes = divisors_between(n, p + min_margin, n // 2)
        if sizes:
            break
    m = int(rng.choice(sizes))
    X = random_design(rng, n, p)
    y = X @ rng.normal(size=p) + rng.normal(scale=0.8, size=n)
    return X, y, disjoint_scheme(n, m)


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(label, passed, detail):
    """Remember one acceptance outcome for the end-of-session summary."""
    ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")


def record_info(label, detail):
    ACCEPTANCE_LINES.append(f"INFO  {label}: {detail}")
