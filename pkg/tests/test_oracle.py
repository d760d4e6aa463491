import numpy as np
import pytest

from cvselect.errors import DomainError
from cvselect.models import ModelAlpha, enumerate_models
from cvselect.oracle import (
    TruthSpec,
    correct_models,
    delta_n,
    full_rss_decomposition,
    loss,
    loss_profile,
    oracle_model,
    parsimonious_correct,
    risk,
    training_rss_decomposition,
    u_n,
)
from cvselect.schemes import disjoint_scheme, rotation_scheme

ONE = ModelAlpha.of(1)


def proj(A):
    return A @ np.linalg.solve(A.T @ A, A.T)


@pytest.fixture
def instance(rng):
    n, p = 24, 4
    X = rng.standard_normal((n, p))
    X[:, 0] = 1.0
    mu = X[:, :2] @ [1.0, 0.5] + 0.3 * np.sin(3 * X[:, 2])
    e = rng.normal(scale=0.9, size=n)
    return X, mu, e, TruthSpec(mu, 0.81)


class TestTruthSpec:
    @pytest.mark.parametrize("s2", [0.0, -1.0, np.inf])
    def test_sigma_positive(self, s2):
        with pytest.raises(DomainError):
            TruthSpec(np.zeros(3), s2)


class TestLoss:
    def test_zero_when_fit_equals_mu(self):
        X = np.ones((3, 1))
        assert loss(X, np.full(3, 2.0), ONE, TruthSpec(np.full(3, 2.0), 1.0)) == pytest.approx(0.0, abs=1e-28)

    def test_hand_value(self):
        mu = np.array([1.0, 2.0, 3.0])
        assert loss(np.ones((3, 1)), mu, ONE, TruthSpec(mu, 1.0)) == pytest.approx(2 / 3)

    def test_decomposition(self, instance):
        X, mu, e, truth = instance
        for alpha in enumerate_models("all-subsets", 4):
            A = X[:, alpha.index]
            P = proj(A)
            n = len(mu)
            lhs = n * loss(X, mu + e, alpha, truth)
            rhs = n * delta_n(X, alpha, truth) + e @ P @ e
            assert lhs == pytest.approx(rhs, rel=1e-9)


class TestDeltaRisk:
    def test_in_span_and_orthogonal(self):
        X = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]])
        mu = np.array([0.0, 3.0, 0.0, 0.0])
        assert delta_n(X, ModelAlpha.of(2), TruthSpec(mu, 1.0)) == pytest.approx(0.0, abs=1e-15)
        assert delta_n(X, ModelAlpha.of(1), TruthSpec(mu, 1.0)) == pytest.approx(9 / 4)

    def test_nesting_monotone(self, instance):
        X, _, _, truth = instance
        nested = list(enumerate_models("nested", 4))
        d = [delta_n(X, a, truth) for a in nested]
        assert all(d[i + 1] <= d[i] + 1e-14 for i in range(len(d) - 1))

    def test_risk_of_correct_model(self, rng):
        X = rng.standard_normal((10, 2))
        truth = TruthSpec(X @ [1.0, 1.0], 2.0)
        assert risk(X, ModelAlpha.of(1, 2), truth) == pytest.approx(2.0 * 2 / 10, rel=1e-12)

    def test_risk_is_expected_loss(self, instance):
        X, mu, _, truth = instance
        alpha = ModelAlpha.of(1, 2)
        draws = np.random.default_rng(11).normal(scale=0.9, size=(10_000, len(mu)))
        losses = np.array([loss(X, mu + e, alpha, truth) for e in draws])
        se = losses.std(ddof=1) / np.sqrt(len(losses))
        r = risk(X, alpha, truth)
        assert r >= delta_n(X, alpha, truth)
        assert abs(losses.mean() - r) < 3 * se


class TestOracle:
    def test_noise_free_true_model(self, rng):
        X = rng.standard_normal((12, 3))
        mu = X[:, :1] @ [2.0]
        truth = TruthSpec(mu, 1.0)
        assert oracle_model(enumerate_models("all-subsets", 3), X, mu, truth) == ONE

    def test_brute_force(self, instance):
        X, mu, e, truth = instance
        y = mu + e
        space = list(enumerate_models("all-subsets", 4))
        losses = {a: np.sum((mu - proj(X[:, a.index]) @ y) ** 2) / len(y) for a in space}
        best = min(losses.values())
        assert oracle_model(space, X, y, truth) == min(
            (a for a in space if losses[a] == best), key=lambda a: a.sort_key
        )
        prof = loss_profile(space, X, y, truth)
        assert all(prof.loss_of(prof.oracle) <= m.loss for m in prof.entries)
        for m in prof.entries:
            assert m.risk == pytest.approx(m.delta + 0.81 * m.alpha.size / len(y))


class TestParsimonious:
    def test_column_one(self, rng):
        X = rng.standard_normal((10, 3))
        truth = TruthSpec(3 * X[:, 0], 1.0)
        assert parsimonious_correct(enumerate_models("nested", 3), X, truth) == ONE

    def test_absent(self, rng):
        X = rng.standard_normal((10, 2))
        truth = TruthSpec(np.exp(X[:, 0]), 1.0)
        assert correct_models(enumerate_models("nested", 2), X, truth) == []
        assert parsimonious_correct(enumerate_models("nested", 2), X, truth) is None

    def test_duplicate_columns(self, rng):
        x = rng.standard_normal(8)
        X = np.column_stack([x, x])
        truth = TruthSpec(2 * x, 1.0)
        space = [ModelAlpha.of(2), ModelAlpha.of(1)]
        assert parsimonious_correct(space, X, truth) == ONE

    def test_parsimonious_has_smallest_loss_among_correct(self, rng):
        X = rng.standard_normal((30, 4))
        mu = X[:, :2] @ [1.0, 1.0]
        truth = TruthSpec(mu, 1.0)
        y = mu + rng.standard_normal(30)
        prof = loss_profile(list(enumerate_models("nested", 4)), X, y, truth)
        assert prof.parsimonious_correct == ModelAlpha.of(1, 2)
        lc = prof.loss_of(prof.parsimonious_correct)
        assert all(lc <= prof.loss_of(a) + 1e-15 for a in prof.correct)


class TestDecompositions:
    def test_full(self, instance):
        X, mu, e, truth = instance
        for alpha in enumerate_models("nested", 4):
            d = full_rss_decomposition(X, mu + e, alpha, truth)
            rhs = d["noise"] + d["loss"] + d["projected_noise"] + d["cross"]
            assert d["lhs"] == pytest.approx(rhs, rel=1e-9)

    @pytest.mark.parametrize("scheme", [disjoint_scheme(24, 6), rotation_scheme(24, 9, 8)])
    def test_training(self, instance, scheme):
        X, mu, e, truth = instance
        for alpha in enumerate_models("nested", 4):
            d = training_rss_decomposition(X, mu + e, alpha, truth, scheme)
            rhs = d["noise"] + d["bias"] + d["projected_noise"] + d["cross"]
            assert d["lhs"] == pytest.approx(rhs, rel=1e-9)

    def test_u_n(self):
        e = np.array([1.0, -1.0])
        assert u_n(e, 0.5, 2.0) == pytest.approx(np.log(2 / 4 + 0.25))
