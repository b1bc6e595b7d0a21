import numpy as np
import pytest

from welfareid import fixtures
from welfareid.choice_model import BudgetPoint, EstimatedSplineProbit, ModelError, logit_model
from welfareid.oracle import agent_cv, agent_welfare, cdf_sup_distance, draw_population, simulate_welfare
from welfareid.splines import build_spline_basis
from welfareid.welfare_distribution import welfare_cdf


def test_degenerate_population():
    pop = simulate_welfare(fixtures.degenerate(5.0), BudgetPoint([2.0], 10.0), 100, seed=0)
    np.testing.assert_allclose(pop.welfare, 13.0, atol=1e-8)
    pop = simulate_welfare(fixtures.degenerate(1.0), BudgetPoint([2.0], 10.0), 100, seed=0)
    np.testing.assert_allclose(pop.welfare, 10.0)


def test_welfare_at_least_income_and_choice_consistent():
    m = fixtures.income_effect()
    pop = simulate_welfare(m, BudgetPoint([1.0], 5.0), 20_000, seed=4)
    assert np.all(pop.welfare >= 5.0)
    assert np.all((pop.welfare > 5.0) == (pop.choice == 1))


def test_removal_identity():
    """y + CV(p -> removed) recovers W: the agent is compensated to the same utility."""
    m = fixtures.income_effect()
    draws = draw_population(m, 2000, seed=5)
    w = agent_welfare(draws, [1.0], 5.0)
    cv = agent_cv(draws, 5.0, [1.0], [np.inf])
    np.testing.assert_allclose(5.0 + cv, w, atol=1e-7)


def test_quasilinear_cv_is_surplus_change():
    m = logit_model(0.3, 1.0)
    draws = draw_population(m, 5000, seed=6)
    cv = agent_cv(draws, 5.0, [1.5], [1.0])
    h = draws.intercepts[:, 1]
    expected = np.maximum(h - 1.0, 0) - np.maximum(h - 1.5, 0)
    np.testing.assert_allclose(-cv, expected, atol=1e-8)


def test_cv_identity_move():
    assert np.all(agent_cv(logit_model(), 5.0, [1.0], [1.0], n=10, seed=0) == 0)


def test_determinism():
    a = simulate_welfare(fixtures.income_effect(), BudgetPoint([1.0], 5.0), 1000, seed=9)
    b = simulate_welfare(fixtures.income_effect(), BudgetPoint([1.0], 5.0), 1000, seed=9)
    np.testing.assert_array_equal(a.welfare, b.welfare)
    c = simulate_welfare(fixtures.income_effect(), BudgetPoint([1.0], 5.0), 1000, seed=10)
    assert not np.array_equal(a.welfare, c.welfare)


def test_common_random_numbers():
    m = fixtures.income_effect()
    pop = simulate_welfare(m, BudgetPoint([1.0], 5.0), 1000, seed=9)
    moved = pop.at(BudgetPoint([0.5], 5.0))
    assert np.all(moved.welfare >= pop.welfare - 1e-9)


def test_estimated_models_are_rejected():
    basis = build_spline_basis(1, 10, 4)
    m = EstimatedSplineProbit(-0.5, np.zeros(basis.size), basis)
    with pytest.raises(ModelError):
        simulate_welfare(m, BudgetPoint([1.0], 5.0), 10, seed=0)


def test_sup_distance_small_for_truth():
    m = fixtures.income_effect()
    pt = BudgetPoint([1.0], 5.0)
    pop = simulate_welfare(m, pt, 50_000, seed=1)
    d = cdf_sup_distance(pop.welfare, lambda c: welfare_cdf(m, pt, c), atom=5.0)
    assert d < 1.63 / np.sqrt(50_000) * 1.5


def test_sup_distance_detects_wrong_model():
    m = fixtures.income_effect()
    pt = BudgetPoint([1.0], 5.0)
    pop = simulate_welfare(m, pt, 50_000, seed=1)
    wrong = logit_model(1.0, 1.0)
    d = cdf_sup_distance(pop.welfare, lambda c: welfare_cdf(wrong, pt, c), atom=5.0)
    assert d > 0.02


def test_sup_distance_exact_sample():
    d = cdf_sup_distance(np.array([0.5]), lambda c: (np.asarray(c) >= 0.5).astype(float), atom=0.5)
    assert d == 0.0
