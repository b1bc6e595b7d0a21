import numpy as np
import pytest
from hypothesis import given, strategies as st

from welfareid import fixtures
from welfareid.bounds import (DemandDataError, ObservedDemandSet, load_demand_csv,
                              multinomial_cdf_bounds, ordered_cdf_bounds)
from welfareid.choice_model import BudgetPoint, logit_model
from welfareid.oracle import simulate_welfare
from welfareid.welfare_distribution import welfare_cdf


@pytest.fixture(scope="module")
def logit_grid():
    m = logit_model()
    r, z = np.meshgrid(np.linspace(0.0, 4.0, 20), np.linspace(1.0, 12.0, 20))
    return m, ObservedDemandSet.from_model(m, r.reshape(-1, 1), z.ravel())


def _ordered_set(model, p_grid, y_grid):
    pp, yy = np.meshgrid(p_grid, y_grid)
    r = np.column_stack([pp.ravel(), 2 * pp.ravel()])
    return ObservedDemandSet.from_model(model, r, yy.ravel())


def test_exact_point_pins_the_cdf():
    m = logit_model()
    point, c = BudgetPoint([1.0], 5.0), 6.5
    S = ObservedDemandSet.from_model(m, np.array([[c - 5.0 + 1.0]]), np.array([c]))
    b = multinomial_cdf_bounds(S, c, point)
    truth = welfare_cdf(m, point, c)
    assert b.lower[0] == pytest.approx(truth) and b.upper[0] == pytest.approx(truth)


def test_empty_set_is_vacuous():
    b = multinomial_cdf_bounds(ObservedDemandSet.empty(1), [5.5, 7.0], BudgetPoint([1.0], 5.0))
    np.testing.assert_array_equal(b.lower, 0.0)
    np.testing.assert_array_equal(b.upper, 1.0)
    assert not b.has_lower.any() and not b.has_upper.any()
    b = ordered_cdf_bounds(ObservedDemandSet.empty(2), [5.5], 1.0, 5.0)
    assert (b.lower[0], b.upper[0]) == (0.0, 1.0)


def test_below_income_the_cdf_is_zero(logit_grid):
    _, S = logit_grid
    b = multinomial_cdf_bounds(S, [3.0, 4.99], BudgetPoint([1.0], 5.0))
    np.testing.assert_array_equal(b.lower, 0.0)
    np.testing.assert_array_equal(b.upper, 0.0)


def test_logit_grid_contains_truth(logit_grid, rng):
    m, S = logit_grid
    for _ in range(50):
        y = rng.uniform(2.0, 8.0)
        p = rng.uniform(0.2, 3.0)
        c = y + rng.uniform(0.0, 3.0)
        b = multinomial_cdf_bounds(S, c, BudgetPoint([p], y))
        truth = welfare_cdf(m, BudgetPoint([p], y), c)
        assert b.lower[0] - 1e-12 <= truth <= b.upper[0] + 1e-12


@given(st.floats(2.0, 8.0), st.floats(0.2, 3.0))
def test_bounds_are_cdf_like(y, p):
    m = logit_model()
    r, z = np.meshgrid(np.linspace(0.0, 4.0, 12), np.linspace(1.0, 12.0, 12))
    S = ObservedDemandSet.from_model(m, r.reshape(-1, 1), z.ravel())
    c = np.linspace(y, y + 5, 40)
    b = multinomial_cdf_bounds(S, c, BudgetPoint([p], y))
    for v in (b.lower, b.upper):
        assert np.all(np.diff(v) >= 0) and np.all((v >= 0) & (v <= 1))
    assert np.all(b.lower <= b.upper + 1e-12)


def test_nested_subsets_tighten(logit_grid, rng):
    _, S = logit_grid
    point = BudgetPoint([1.3], 4.5)
    c = np.linspace(4.5, 9.0, 25)
    order = rng.permutation(len(S))
    prev = None
    for k in (25, 100, 200, 400):
        b = multinomial_cdf_bounds(S.subset(order[:k]), c, point)
        if prev is not None:
            assert np.all(b.lower >= prev.lower) and np.all(b.upper <= prev.upper)
        prev = b


def test_multinomial_fixture_contains_truth(multinomial, rng):
    g = np.linspace(0.0, 3.0, 8)
    r1, r2, z = np.meshgrid(g, g, np.linspace(1.0, 10.0, 8))
    S = ObservedDemandSet.from_model(multinomial, np.column_stack([r1.ravel(), r2.ravel()]), z.ravel())
    for _ in range(20):
        y = rng.uniform(2, 6)
        point = BudgetPoint(rng.uniform(0.3, 2.5, 2), y)
        c = y + rng.uniform(0, 2)
        b = multinomial_cdf_bounds(S, c, point)
        assert b.lower[0] - 1e-12 <= welfare_cdf(multinomial, point, c) <= b.upper[0] + 1e-12


def test_dimension_mismatch(logit_grid):
    _, S = logit_grid
    with pytest.raises(DemandDataError):
        multinomial_cdf_bounds(S, 5.0, BudgetPoint([1.0, 2.0], 5.0))


def test_ordered_containment_against_simulation(rng):
    m = fixtures.ordered()
    S = _ordered_set(m, np.linspace(0.1, 3.0, 25), np.linspace(1.0, 12.0, 25))
    pops = {}
    for _ in range(50):
        p = float(rng.choice([0.5, 1.0, 1.5]))
        y = float(rng.choice([3.0, 5.0]))
        if (p, y) not in pops:
            pops[p, y] = simulate_welfare(m, BudgetPoint([p, 2 * p], y), 100_000, seed=int(10 * p + y))
        pop = pops[p, y]
        c = y + rng.uniform(0, 4)
        F = float(pop.ecdf(c))
        tol = 4 * np.sqrt(max(F * (1 - F), 1e-4) / pop.n)
        b = ordered_cdf_bounds(S, c, p, y)
        assert b.lower[0] <= F + tol and F - tol <= b.upper[0]
        assert b.lower[0] <= welfare_cdf(m, BudgetPoint([p, 2 * p], y), c) <= b.upper[0]


def test_ordered_bounds_monotone_and_anchored():
    m = fixtures.ordered()
    S = _ordered_set(m, np.linspace(0.1, 3.0, 15), np.linspace(1.0, 12.0, 15))
    p, y = S.prices[7, 0], S.incomes[7]
    c = np.linspace(y, y + 6, 50)
    b = ordered_cdf_bounds(S, c, p, y)
    assert np.all(np.diff(b.lower) >= 0) and np.all(np.diff(b.upper) >= 0)
    assert np.all(b.lower <= b.upper)
    assert b.lower[0] >= S.q0[7] - 1e-15


def test_ordered_rejects_other_price_patterns():
    S = ObservedDemandSet(np.array([[1.0, 3.0]]), np.array([5.0]), np.array([0.4]))
    with pytest.raises(DemandDataError):
        ordered_cdf_bounds(S, 5.0, 1.0, 5.0)


@pytest.mark.parametrize("kwargs", [
    dict(prices=np.array([[1.0]]), incomes=np.array([5.0]), q0=np.array([1.5])),
    dict(prices=np.array([[1.0], [1.0]]), incomes=np.array([5.0, 5.0]), q0=np.array([0.2, 0.3])),
    dict(prices=np.array([[1.0]]), incomes=np.array([5.0, 6.0]), q0=np.array([0.2])),
])
def test_set_validation(kwargs):
    with pytest.raises(DemandDataError):
        ObservedDemandSet(**kwargs)


def test_csv_roundtrip(tmp_path):
    m = fixtures.ordered()
    S = _ordered_set(m, [0.5, 1.0], [2.0, 3.0])
    path = tmp_path / "s.csv"
    S.to_csv(path)
    back = load_demand_csv(path, ordered=True)
    np.testing.assert_array_equal(back.prices, S.prices)
    np.testing.assert_array_equal(back.q0, S.q0)


def test_csv_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("r_1,z,q0\n1.0,2.0,nope\n")
    with pytest.raises(DemandDataError):
        load_demand_csv(bad)
    bad.write_text("r_1,r_2,z,q0\n1.0,3.0,2.0,0.5\n")
    with pytest.raises(DemandDataError):
        load_demand_csv(bad, ordered=True)
    with pytest.raises(FileNotFoundError):
        load_demand_csv(tmp_path / "missing.csv")
