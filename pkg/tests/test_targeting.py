import numpy as np
import pytest

from welfareid import fixtures
from welfareid.binary_welfare import ate_values
from welfareid.choice_model import ModelError, logit_model
from welfareid.targeting import (Criterion, IncomeDistribution, NodeProblem, SubsidySchedule,
                                 TargetingError, bayes_optimal_schedule, expected_benefit,
                                 foc_identity_gap, load_income_csv, optimal_schedule,
                                 program_cost, random_feasible_schedules, schedule_space,
                                 semi_elasticity, soc_check, welfare_change_by_income,
                                 zero_crossing)

PBAR = 2.0
GRID_F = IncomeDistribution.from_sample(np.linspace(1.0, 10.0, 40))
TWO = IncomeDistribution.two_point(2.0, 8.0)


@pytest.fixture(scope="module")
def shape_solutions():
    m = fixtures.targeting_shape()
    return {c: optimal_schedule(m, PBAR, c, GRID_F, budget=0.2) for c in ("ate", "acv", "casw:0")}


@pytest.fixture(scope="module")
def income_effect_solutions():
    m = fixtures.income_effect()
    return {c: optimal_schedule(m, PBAR, c, GRID_F, budget=0.2) for c in ("ate", "acv", "casw:0")}


# --- building blocks ----------------------------------------------------------

def test_income_distribution_normalises():
    F = IncomeDistribution([3.0, 1.0, 2.0], [2.0, 1.0, 1.0])
    np.testing.assert_array_equal(F.incomes, [1.0, 2.0, 3.0])
    np.testing.assert_allclose(F.weights, [0.25, 0.25, 0.5])
    assert F.expect(F.incomes) == pytest.approx(2.25)
    with pytest.raises(ValueError):
        IncomeDistribution([1.0], [0.0])
    with pytest.raises(ValueError):
        IncomeDistribution([-1.0], [1.0])


def test_income_csv(tmp_path):
    p = tmp_path / "y.csv"
    p.write_text("y,weight\n1,1\n3,3\n")
    F = load_income_csv(p)
    np.testing.assert_allclose(F.weights, [0.25, 0.75])
    p.write_text("income\n1\n")
    with pytest.raises(ValueError):
        load_income_csv(p)


def test_criterion_parse():
    assert Criterion.parse("casw:0.5") == Criterion("casw", 0.5)
    assert Criterion.parse("ATE") == Criterion("ate")
    assert str(Criterion.parse("casw:1")) == "casw:1"
    with pytest.raises(ValueError):
        Criterion.parse("welfare")


def test_schedule_space_defaults():
    sp = schedule_space(GRID_F, PBAR)
    assert sp.bounds == (-PBAR, 0.95 * PBAR) and sp.coefficients.size == 6
    assert np.all(sp(GRID_F.incomes) == 0)
    with pytest.raises(ValueError):
        schedule_space(GRID_F, PBAR, bounds=(-1.0, PBAR))
    pw = schedule_space(TWO, PBAR, kind="pointwise")
    np.testing.assert_array_equal(pw.with_coefficients([0.1, 0.2])(TWO.incomes), [0.1, 0.2])
    with pytest.raises(ValueError):
        pw(np.array([3.0]))


def test_schedule_validation():
    with pytest.raises(ValueError):
        SubsidySchedule("spline", np.zeros(3), (0.0, 1.0))
    with pytest.raises(ValueError):
        SubsidySchedule("pointwise", np.zeros(2), (1.0, 0.0), nodes=[1.0, 2.0])


def test_program_cost_examples():
    m = logit_model()
    F = IncomeDistribution.two_point(2.0, 5.0)
    sp = schedule_space(F, 1.0, bounds=(-1.0, 0.99), kind="pointwise")
    assert program_cost(m, 1.0, sp, F) == 0.0
    assert program_cost(m, 1.0, sp.with_coefficients([0.99, 0.99]), F) == pytest.approx(
        0.99 * float(m.q1(0.01, 2.0)))
    # sigma = 1 itself is outside every box; evaluate the limit directly
    from welfareid.binary_welfare import cost_values
    assert F.expect(cost_values(m, 1.0, np.ones(2), F.incomes)) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        program_cost(m, 1.0, sp.with_coefficients([1.0, 0.0]), F)


def test_antisymmetric_schedule_costs_nothing_under_flat_demand():
    m = fixtures.degenerate(10.0)
    sp = schedule_space(TWO, 2.0, kind="pointwise").with_coefficients([0.7, -0.7])
    assert program_cost(m, 2.0, sp, TWO) == pytest.approx(0.0, abs=1e-15)


def test_node_problem_needs_binary_model():
    with pytest.raises(ModelError):
        NodeProblem(fixtures.multinomial(), 1.0, "ate", TWO, (-1.0, 0.5))


def test_frozen_quadrature_matches_adaptive():
    m = fixtures.income_effect()
    sp = schedule_space(GRID_F, PBAR).with_coefficients(np.linspace(1.0, -1.0, 6))
    for crit in ("acv", "casw:0", "casw:0.5"):
        prob = NodeProblem(m, PBAR, crit, GRID_F, sp.bounds)
        frozen = GRID_F.expect(prob.benefit(sp(GRID_F.incomes)))
        assert frozen == pytest.approx(expected_benefit(m, PBAR, sp, GRID_F, crit), abs=1e-7)


# --- optimal schedules --------------------------------------------------------

@pytest.mark.parametrize("crit", ["ate", "acv", "casw:0"])
def test_budget_and_stationarity(shape_solutions, crit):
    r = shape_solutions[crit]
    assert abs(r.budget_residual) < 1e-4
    assert r.projected_gradient < 1e-5
    assert "not_stationary" not in r.flags


@pytest.mark.parametrize("crit", ["ate", "acv", "casw:0"])
def test_beats_uniform_and_random(shape_solutions, crit):
    m = fixtures.targeting_shape()
    r = shape_solutions[crit]
    others = random_feasible_schedules(m, PBAR, GRID_F, 0.2, count=100, seed=1)
    assert len(others) == 100
    for s in others:
        assert abs(program_cost(m, PBAR, s, GRID_F) - 0.2) < 1e-9
        assert r.objective >= expected_benefit(m, PBAR, s, GRID_F, crit) - 1e-8
    from scipy import optimize
    sp = schedule_space(GRID_F, PBAR)
    level = optimize.brentq(lambda a: program_cost(m, PBAR, sp.with_coefficients(np.full(6, a)), GRID_F) - 0.2,
                            0.0, 1.9)
    uniform = sp.with_coefficients(np.full(6, level))
    assert r.objective >= expected_benefit(m, PBAR, uniform, GRID_F, crit) - 1e-8


def test_ate_schedule_targets_the_poor(shape_solutions):
    s = shape_solutions["ate"].schedule(np.linspace(1, 10, 200))
    assert np.all(np.diff(s) <= 1e-9)


def test_income_invariant_problem_is_flagged():
    m = logit_model(1.0, 1.0)
    r = optimal_schedule(m, PBAR, "ate", GRID_F, budget=0.0)
    assert "income_invariant_demand" in r.flags
    assert abs(r.budget_residual) < 1e-4
    # every budget-neutral schedule gains nothing over zero
    zero = schedule_space(GRID_F, PBAR)
    assert r.objective >= expected_benefit(m, PBAR, zero, GRID_F, "ate") - 1e-8


def test_inequality_budget():
    m = fixtures.targeting_shape()
    r = optimal_schedule(m, PBAR, "ate", GRID_F, budget=0.2, equality=False)
    assert r.cost <= 0.2 + 1e-4
    eq = optimal_schedule(m, PBAR, "ate", GRID_F, budget=0.2)
    assert r.objective == pytest.approx(eq.objective, abs=1e-6)


def test_infeasible_budget():
    with pytest.raises(TargetingError):
        optimal_schedule(fixtures.targeting_shape(), PBAR, "ate", GRID_F, budget=50.0)


def test_box_must_keep_prices_positive():
    sp = SubsidySchedule("pointwise", np.zeros(2), (-1.0, 2.5), nodes=TWO.incomes)
    with pytest.raises(TargetingError):
        optimal_schedule(fixtures.targeting_shape(), PBAR, "ate", TWO, space=sp)


def test_two_point_first_order_identity():
    m = fixtures.targeting_shape()
    sp = schedule_space(TWO, PBAR, kind="pointwise")
    r = optimal_schedule(m, PBAR, "ate", TWO, budget=0.1, space=sp)
    assert abs(foc_identity_gap(m, PBAR, TWO, r)) < 1e-4
    rep = soc_check(m, PBAR, "ate", TWO, r)
    assert rep.determinant_positive and rep.tangency_pass and not rep.inconclusive


def test_semi_elasticity_logit():
    m = logit_model(0.0, 1.0)
    p = np.array([0.5, 1.5])
    np.testing.assert_allclose(semi_elasticity(m, p, 3.0), 1 - m.q1(p, 3.0), rtol=1e-8)


def test_soc_degenerate_problem_is_inconclusive():
    m = fixtures.degenerate(10.0)
    rep = soc_check(m, PBAR, "ate", TWO, np.array([0.3, -0.3]))
    assert rep.inconclusive and not rep.determinant_positive
    assert "zero_curvature" in rep.flags
    with pytest.raises(ValueError):
        soc_check(m, PBAR, "ate", GRID_F, np.zeros(40))


def test_criteria_diverge(income_effect_solutions):
    y = np.linspace(1, 10, 200)
    sched = {c: r.schedule(y) for c, r in income_effect_solutions.items()}
    names = list(sched)
    for i in range(3):
        for j in range(i + 1, 3):
            assert np.max(np.abs(sched[names[i]] - sched[names[j]])) > 1e-3


@pytest.fixture(scope="module")
def revenue_neutral():
    m = fixtures.income_effect()
    y = np.linspace(1, 10, 400)
    out = {}
    for crit in ("ate", "casw:0"):
        r = optimal_schedule(m, PBAR, crit, GRID_F, budget=0.0)
        out[crit] = (r, welfare_change_by_income(m, PBAR, r.schedule, y))
    return y, out


def test_revenue_neutral_schedules_tax_the_rich(revenue_neutral):
    y, out = revenue_neutral
    for r, gain in out.values():
        s = r.schedule(y)
        assert s[0] > 0 > s[-1]
        assert gain[0] > 0 > gain[-1]
        assert np.isfinite(zero_crossing(y, gain))


@pytest.mark.xfail(strict=True, reason="crossings differ by about 16% of the income range on "
                                        "this fixture; see the decisions ledger")
def test_welfare_changes_cross_zero_nearby(revenue_neutral):
    y, out = revenue_neutral
    za = zero_crossing(y, out["ate"][1])
    zc = zero_crossing(y, out["casw:0"][1])
    assert abs(za - zc) < 0.1 * (y[-1] - y[0])


def test_acv_revenue_neutral_optimum_is_zero():
    # unit demand cannot rise along (p + z, y + z), so ACV never exceeds cost
    m = fixtures.income_effect()
    r = optimal_schedule(m, PBAR, "acv", GRID_F, budget=0.0, starts=2)
    assert np.max(np.abs(r.schedule(GRID_F.incomes))) < 1e-4
    assert abs(r.objective) < 1e-8


def test_zero_crossing():
    assert zero_crossing([0, 1, 2], [1.0, -1.0, -2.0]) == pytest.approx(0.5)
    assert np.isnan(zero_crossing([0, 1], [1.0, 2.0]))


# --- Bayesian variant ---------------------------------------------------------

def test_bayes_single_draw_recovers_optimum():
    m = fixtures.targeting_shape()
    sp = schedule_space(TWO, PBAR, kind="pointwise")
    direct = optimal_schedule(m, PBAR, "ate", TWO, budget=0.1, space=sp)
    bayes = bayes_optimal_schedule([m], PBAR, "ate", TWO, penalty=1e6, budget=0.1, space=sp)
    assert np.max(np.abs(bayes.schedule.coefficients - direct.schedule.coefficients)) < 1e-3


def _shifted(delta):
    from welfareid.choice_model import HeterogeneitySpec, UtilitySpec, make_synthetic
    return make_synthetic(UtilitySpec((0.0, -1.0 + delta), (0.5, 1.0), ("linear", "linear")),
                          HeterogeneitySpec("logit", 1.0, 0.0, 0.0))


def test_bayes_two_draws_between_point_solutions():
    sp = schedule_space(TWO, PBAR, kind="pointwise")
    # the penalty also charges cross-draw cost variance, so the envelope only holds
    # while that variance is small relative to the perturbation
    lo_m, hi_m = _shifted(-0.1), _shifted(0.1)
    a = bayes_optimal_schedule([lo_m], PBAR, "ate", TWO, penalty=10.0, budget=0.1, space=sp)
    b = bayes_optimal_schedule([hi_m], PBAR, "ate", TWO, penalty=10.0, budget=0.1, space=sp)
    both = bayes_optimal_schedule([lo_m, hi_m], PBAR, "ate", TWO, penalty=10.0, budget=0.1, space=sp)
    ca, cb, cm = a.schedule.coefficients, b.schedule.coefficients, both.schedule.coefficients
    assert np.all(cm >= np.minimum(ca, cb) - 1e-6) and np.all(cm <= np.maximum(ca, cb) + 1e-6)


def test_bayes_without_penalty_runs_to_the_box():
    m = fixtures.targeting_shape()
    r = bayes_optimal_schedule([m], PBAR, "ate", TWO, penalty=0.0)
    assert "no_budget_force" in r.flags and "box_bound_active" in r.flags


def test_bayes_input_validation():
    with pytest.raises(ValueError):
        bayes_optimal_schedule([], PBAR, "ate", TWO)
    with pytest.raises(ValueError):
        bayes_optimal_schedule([fixtures.targeting_shape()], PBAR, "ate", TWO, penalty=-1)
    with pytest.raises(ValueError):
        bayes_optimal_schedule([fixtures.targeting_shape()], PBAR, "ate")


def test_bayes_accepts_model_income_pairs():
    m = fixtures.targeting_shape()
    r = bayes_optimal_schedule([(m, TWO), (m, TWO)], PBAR, "ate", penalty=10.0, budget=0.1,
                               space=schedule_space(TWO, PBAR, kind="pointwise"))
    assert abs(r.cost - 0.1) < 0.05
