"""Budget-constrained, income-targeted price subsidies.

The planner picks a schedule ``sigma(y)`` to maximise

    B(sigma) = E_Y[ b(sigma(Y), Y) ]

where ``b`` is the ATE, ACV or change in ASW at income ``y``, subject to the
programme cost ``E_Y[sigma(Y) q_1(pbar - sigma(Y), Y)]`` equalling (or not
exceeding) a budget ``M``.  ``M = 0`` with a schedule that may go negative is
the revenue-neutral tax-and-subsidise problem.

Benefits and costs separate across income nodes, so derivatives with respect
to schedule coefficients follow from per-node derivatives in ``sigma`` and
the chain rule through the schedule basis.
"""
import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import binary_welfare as bw
from . import quadrature
from .choice_model import ChoiceModel, ModelError
from .splines import SplineBasis

log = logging.getLogger(__name__)

# frozen panel counts; both reach machine precision on the bundled fixtures
FIXED_PANELS = 16
ACV_PANELS = 4
FD_STEP = 1e-5


class TargetingError(RuntimeError):
    """The targeting problem is infeasible or the solver failed."""


# ---------------------------------------------------------------------------
# income distribution and schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IncomeDistribution:
    """Discrete income distribution ``{(y_k, pi_k)}`` (empirical samples included)."""

    incomes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.incomes, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if y.size == 0 or y.shape != w.shape:
            raise ValueError("incomes and weights must be non-empty and of equal length")
        if np.any(y <= 0) or not np.all(np.isfinite(y)):
            raise ValueError("incomes must be positive and finite")
        if np.any(w <= 0):
            raise ValueError("income weights must be positive")
        order = np.argsort(y, kind="stable")
        object.__setattr__(self, "incomes", y[order])
        object.__setattr__(self, "weights", w[order] / w.sum())

    @classmethod
    def from_sample(cls, sample, weights=None):
        sample = np.asarray(sample, dtype=float)
        w = np.ones(sample.size) if weights is None else weights
        return cls(sample, w)

    @classmethod
    def two_point(cls, y1, y2, share1=0.5):
        return cls([y1, y2], [share1, 1.0 - share1])

    @property
    def size(self):
        return self.incomes.size

    @property
    def support(self):
        return float(self.incomes[0]), float(self.incomes[-1])

    def expect(self, values):
        return float(np.asarray(values) @ self.weights)


def load_income_csv(path) -> IncomeDistribution:
    """Columns ``y`` and optional ``weight``."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows or "y" not in rows[0]:
        raise ValueError(f"{path}: expected a 'y' column")
    header, body = rows[0], rows[1:]
    iy = header.index("y")
    iw = header.index("weight") if "weight" in header else None
    y = [float(r[iy]) for r in body]
    w = [float(r[iw]) for r in body] if iw is not None else None
    return IncomeDistribution.from_sample(y, w)


@dataclass(frozen=True)
class SubsidySchedule:
    """``sigma(y) = basis(y) @ coefficients`` with a box on the coefficients.

    ``kind="spline"`` uses a clamped cubic B-spline over the income support
    (nonnegative, summing to one, so the coefficient box bounds ``sigma``
    itself).  ``kind="pointwise"`` has one free value per income node.
    """

    kind: str
    coefficients: np.ndarray
    bounds: tuple
    basis: SplineBasis = None
    nodes: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "coefficients", np.asarray(self.coefficients, dtype=float))
        lo, hi = self.bounds
        if not lo < hi:
            raise ValueError("schedule box must have lower < upper")
        if self.kind == "spline":
            if self.basis is None or self.basis.size != self.coefficients.size:
                raise ValueError("spline schedule needs a basis matching its coefficients")
        elif self.kind == "pointwise":
            if self.nodes is None or np.asarray(self.nodes).size != self.coefficients.size:
                raise ValueError("pointwise schedule needs one node per coefficient")
            object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        else:
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    def design(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if self.kind == "spline":
            return self.basis(np.clip(y, self.basis.y_min, self.basis.y_max))
        idx = np.searchsorted(self.nodes, y)
        idx = np.clip(idx, 0, self.nodes.size - 1)
        if not np.allclose(self.nodes[idx], y, rtol=1e-12, atol=0):
            raise ValueError("pointwise schedule evaluated off its income nodes")
        out = np.zeros((y.size, self.nodes.size))
        out[np.arange(y.size), idx] = 1.0
        return out

    def __call__(self, y):
        return self.design(y) @ self.coefficients

    def with_coefficients(self, coef):
        return SubsidySchedule(self.kind, np.asarray(coef, dtype=float), self.bounds, self.basis,
                               self.nodes)

    def to_dict(self):
        d = {"kind": self.kind, "coefficients": [float(v) for v in self.coefficients],
             "bounds": [float(v) for v in self.bounds]}
        if self.basis is not None:
            d["basis"] = self.basis.to_dict()
        if self.nodes is not None:
            d["nodes"] = [float(v) for v in self.nodes]
        return d


def schedule_space(F: IncomeDistribution, pbar, bounds=None, kind="spline", size=6):
    """Default schedule family for ``F``: the zero schedule with its box.

    The default box is ``[-pbar, 0.95 * pbar]`` so the post-subsidy price
    stays positive.
    """
    lo, hi = (-float(pbar), 0.95 * float(pbar)) if bounds is None else map(float, bounds)
    if hi >= pbar:
        raise ValueError("upper subsidy bound must stay below the base price")
    if kind == "pointwise":
        return SubsidySchedule("pointwise", np.zeros(F.size), (lo, hi), nodes=F.incomes)
    y0, y1 = F.support
    if y1 <= y0:
        y1 = y0 + 1.0
    degree = 3
    basis = SplineBasis(y0, y1, max(size - degree, 2), degree)
    return SubsidySchedule("spline", np.zeros(basis.size), (lo, hi), basis=basis)


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Criterion:
    kind: str
    epsilon: float = 0.0

    def __post_init__(self):
        if self.kind not in ("ate", "acv", "casw"):
            raise ValueError(f"unknown criterion {self.kind!r}")
        if self.epsilon < 0:
            raise ValueError("inequality aversion must be non-negative")

    @classmethod
    def parse(cls, text):
        if isinstance(text, Criterion):
            return text
        name, _, eps = str(text).lower().partition(":")
        return cls(name, float(eps) if eps else 0.0)

    def __str__(self):
        return f"casw:{self.epsilon:g}" if self.kind == "casw" else self.kind


class NodeProblem:
    """Per-income-node benefit and cost as smooth functions of ``sigma``.

    Quadrature is frozen at construction: truncation points are fixed per
    node (large enough for any ``sigma`` in the box) and the panel count is
    constant, so the optimiser always sees the same rule.
    """

    def __init__(self, model: ChoiceModel, pbar, criterion, F: IncomeDistribution, bounds,
                 panels=None):
        if model.J != 1:
            raise ModelError("targeting needs a binary choice model")
        self.model = model
        self.pbar = float(pbar)
        self.criterion = Criterion.parse(criterion)
        self.F = F
        if panels is None:
            panels = ACV_PANELS if self.criterion.kind == "acv" else FIXED_PANELS
        self.panels = panels
        self.y = F.incomes
        self.pb = np.full(F.size, self.pbar)
        self.upper = None
        if self.criterion.kind == "casw":
            uppers = []
            for s in bounds:
                f = bw.delta_asw_integrand(model, self.pb, np.full(F.size, s), self.y,
                                           self.criterion.epsilon)
                uppers.append(quadrature.auto_upper(f, np.full(F.size, model.money_scale)))
            self.upper = np.maximum(*uppers)
        self.h = FD_STEP * max(1.0, self.pbar)

    def benefit(self, s):
        s = np.asarray(s, dtype=float)
        kind = self.criterion.kind
        if kind == "ate":
            return bw.ate_values(self.model, self.pb, s, self.y)
        if kind == "acv":
            return bw.acv_values(self.model, self.pb, s, self.y, panels=self.panels)
        return bw.delta_asw_values(self.model, self.pb, s, self.y, self.criterion.epsilon,
                                   upper=self.upper, panels=self.panels)

    def cost(self, s):
        return bw.cost_values(self.model, self.pb, s, self.y)

    def derivatives(self, fn, s, order=1):
        h = self.h
        up, dn = fn(s + h), fn(s - h)
        d1 = (up - dn) / (2 * h)
        if order == 1:
            return d1
        mid = fn(s)
        return d1, (up - 2 * mid + dn) / (h * h)


# ---------------------------------------------------------------------------
# objective helpers
# ---------------------------------------------------------------------------

def program_cost(model: ChoiceModel, pbar, schedule: SubsidySchedule, F: IncomeDistribution):
    """``E_Y[sigma(Y) q_1(pbar - sigma(Y), Y)]``; taxes enter as negative cost."""
    s = schedule(F.incomes)
    if np.any(pbar - s <= 0):
        raise ValueError("schedule pushes the price to zero or below")
    return F.expect(bw.cost_values(model, pbar, s, F.incomes))


def expected_benefit(model, pbar, schedule, F, criterion, truncation=None):
    """``E_Y[b(sigma(Y), Y)]`` with adaptive quadrature (for reporting)."""
    crit = Criterion.parse(criterion)
    s = schedule(F.incomes)
    y = F.incomes
    if crit.kind == "ate":
        vals = bw.ate_values(model, pbar, s, y)
    elif crit.kind == "acv":
        vals = bw.acv_values(model, pbar, s, y)
    else:
        vals = bw.delta_asw_values(model, pbar, s, y, crit.epsilon, truncation)
    return F.expect(vals)


@dataclass
class _Evaluator:
    problem: NodeProblem
    design: np.ndarray

    def values(self, coef):
        s = self.design @ coef
        w = self.problem.F.weights
        return float(w @ self.problem.benefit(s)), float(w @ self.problem.cost(s))

    def gradients(self, coef):
        s = self.design @ coef
        w = self.problem.F.weights
        db = self.problem.derivatives(self.problem.benefit, s)
        dc = self.problem.derivatives(self.problem.cost, s)
        return self.design.T @ (w * db), self.design.T @ (w * dc)

    def hessians(self, coef):
        s = self.design @ coef
        w = self.problem.F.weights
        _, db2 = self.problem.derivatives(self.problem.benefit, s, 2)
        _, dc2 = self.problem.derivatives(self.problem.cost, s, 2)
        D = self.design
        return (D.T * (w * db2)) @ D, (D.T * (w * dc2)) @ D


@dataclass(frozen=True)
class TargetingResult:
    schedule: SubsidySchedule
    objective: float
    cost: float
    budget: float
    multiplier: float
    projected_gradient: float
    flags: tuple = ()
    starts: int = 0
    start_objectives: tuple = field(default=(), repr=False)

    @property
    def budget_residual(self):
        return self.cost - self.budget

    def report(self):
        return {"objective": self.objective, "cost": self.cost, "budget": self.budget,
                "budget_residual": self.budget_residual, "multiplier": self.multiplier,
                "projected_gradient": self.projected_gradient, "flags": list(self.flags),
                "schedule": self.schedule.to_dict()}


def _projected(g, coef, lo, hi, tol=1e-10):
    out = g.copy()
    at_lo = coef <= lo + tol
    at_hi = coef >= hi - tol
    out[at_lo] = np.maximum(out[at_lo], 0.0)
    out[at_hi] = np.minimum(out[at_hi], 0.0)
    return out


def _uniform_level(ev, budget, lo, hi):
    """Constant schedule level whose cost equals ``budget`` (None if out of reach)."""
    n = ev.design.shape[1]

    def gap(a):
        return ev.values(np.full(n, a))[1] - budget
    grid = np.linspace(lo, hi, 65)
    vals = np.array([gap(a) for a in grid])
    if np.any(vals == 0):
        return float(grid[np.argmax(vals == 0)])
    sign = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    if sign.size == 0:
        return None
    # prefer the root closest to zero subsidy
    k = sign[np.argmin(np.abs(grid[sign]))]
    return float(optimize.brentq(gap, grid[k], grid[k + 1], xtol=1e-14))


def _penalty_path(ev, start, budget, lo, hi, equality, weights=(1e2, 1e5)):
    coef = start.copy()
    bounds = [(lo, hi)] * coef.size
    for c in weights:
        def fun(x, c=c):
            b, cost = ev.values(x)
            gb, gc = ev.gradients(x)
            r = cost - budget
            if not equality and r < 0:
                return -b, -gb
            return -b + c * r * r, -gb + 2 * c * r * gc
        res = optimize.minimize(fun, coef, jac=True, method="L-BFGS-B", bounds=bounds,
                                options={"maxiter": 500, "ftol": 1e-15, "gtol": 1e-10})
        coef = np.clip(res.x, lo, hi)
    return coef


def _kkt_polish(ev, coef, budget, lo, hi, equality, iters=40):
    """Newton on the KKT system over the coefficients strictly inside the box."""
    lam = 0.0
    for _ in range(iters):
        b, cost = ev.values(coef)
        gb, gc = ev.gradients(coef)
        r = cost - budget
        free = (coef > lo + 1e-12) & (coef < hi - 1e-12)
        if not free.any():
            break
        gcf = gc[free]
        active = equality or r > -1e-12
        if active:
            lam = float(gb[free] @ gcf / max(gcf @ gcf, 1e-300))
        else:
            lam = 0.0
        Hb, Hc = ev.hessians(coef)
        H = (Hb - lam * Hc)[np.ix_(free, free)]
        g = gb[free] - lam * gcf
        if np.max(np.abs(g)) < 1e-11 and (abs(r) < 1e-13 or not active):
            break
        k = int(free.sum())
        if active:
            K = np.zeros((k + 1, k + 1))
            K[:k, :k] = H
            K[:k, k] = -gcf
            K[k, :k] = gcf
            rhs = np.concatenate([-g, [-r]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                break
            step = sol[:k]
        else:
            try:
                step = np.linalg.solve(H, -g)
            except np.linalg.LinAlgError:
                break
        new = coef.copy()
        new[free] = np.clip(coef[free] + step, lo, hi)
        if np.max(np.abs(new - coef)) < 1e-13:
            coef = new
            break
        coef = new
    b, cost = ev.values(coef)
    gb, gc = ev.gradients(coef)
    free = (coef > lo + 1e-12) & (coef < hi - 1e-12)
    if free.any() and (equality or cost - budget > -1e-12):
        lam = float(gb[free] @ gc[free] / max(gc[free] @ gc[free], 1e-300))
    return coef, lam


def _random_starts(n, lo, hi, seed, count):
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    span = hi - lo
    return [np.clip(rng.uniform(lo + 0.1 * span, hi - 0.1 * span) + rng.normal(0, 0.1 * span, n),
                    lo, hi) for _ in range(count)]


def optimal_schedule(model: ChoiceModel, pbar, criterion, F: IncomeDistribution, budget=0.0,
                     space: SubsidySchedule = None, equality=True, starts=5, seed=0,
                     budget_tol=1e-4) -> TargetingResult:
    """Maximise expected benefit subject to the programme budget.

    Parameters
    ----------
    criterion : {"ate", "acv", "casw:<eps>"} or Criterion
    budget : float
        ``M``; ``0`` gives the revenue-neutral problem when the box allows taxes.
    space : SubsidySchedule, optional
        Schedule family and box (see :func:`schedule_space`).
    equality : bool
        ``True`` imposes cost ``= M``, ``False`` cost ``<= M``.
    starts : int
        Deterministic multi-start count: the uniform schedule, zero, then
        seeded random schedules.
    """
    pbar = float(pbar)
    space = schedule_space(F, pbar) if space is None else space
    lo, hi = space.bounds
    if hi >= pbar:
        raise TargetingError("schedule box allows non-positive prices")
    problem = NodeProblem(model, pbar, criterion, F, (lo, hi))
    ev = _Evaluator(problem, space.design(F.incomes))
    n = space.coefficients.size
    flags = []
    level = _uniform_level(ev, budget, lo, hi)
    candidates = []
    if level is not None:
        candidates.append(np.full(n, level))
    elif equality:
        # the per-node extremes bound what any schedule can spend
        grid = np.linspace(lo, hi, 257)
        node_cost = np.array([problem.cost(np.full(F.size, a)) for a in grid])
        lo_cost = F.weights @ node_cost.min(axis=0)
        hi_cost = F.weights @ node_cost.max(axis=0)
        if not lo_cost - budget_tol <= budget <= hi_cost + budget_tol:
            raise TargetingError(
                f"budget {budget:g} outside the attainable cost range [{lo_cost:.6g}, {hi_cost:.6g}]")
    candidates.append(np.zeros(n))
    candidates += _random_starts(n, lo, hi, seed, max(starts - len(candidates), 0))
    candidates = candidates[:max(starts, 1)]

    best = None
    tried = []
    for x0 in candidates:
        coef = _penalty_path(ev, x0, budget, lo, hi, equality)
        coef, lam = _kkt_polish(ev, coef, budget, lo, hi, equality)
        b, cost = ev.values(coef)
        feasible = abs(cost - budget) <= budget_tol * max(1.0, abs(budget)) if equality \
            else cost <= budget + budget_tol * max(1.0, abs(budget))
        tried.append(b)
        if feasible and (best is None or b > best[0] + 1e-12):
            best = (b, cost, coef, lam)
    if best is None:
        raise TargetingError("no start reached a budget-feasible schedule")
    b, cost, coef, lam = best
    gb, gc = ev.gradients(coef)
    pg = float(np.max(np.abs(_projected(gb - lam * gc, coef, lo, hi)), initial=0.0))
    if model.income_invariant:
        flags.append("income_invariant_demand")
    if np.any(coef <= lo + 1e-10) or np.any(coef >= hi - 1e-10):
        flags.append("box_bound_active")
    if pg > 1e-5:
        flags.append("not_stationary")
        log.warning("targeting solution projected gradient %.3g", pg)
    return TargetingResult(space.with_coefficients(coef), b, cost, float(budget), lam, pg,
                           tuple(flags), len(candidates), tuple(tried))


def random_feasible_schedules(model, pbar, F, budget, space=None, count=100, seed=0):
    """Random schedules in the box, shifted so their cost equals ``budget``.

    Draws that cannot be shifted onto the budget inside the box are skipped.
    """
    space = schedule_space(F, pbar) if space is None else space
    lo, hi = space.bounds
    D = space.design(F.incomes)
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    out = []
    attempts = 0
    while len(out) < count and attempts < 50 * count:
        attempts += 1
        raw = rng.uniform(lo, hi, space.coefficients.size)
        amp = rng.uniform(0.05, 0.5)
        shape = amp * (raw - raw.mean())

        def gap(a):
            s = D @ np.clip(shape + a, lo, hi)
            return F.expect(bw.cost_values(model, pbar, s, F.incomes)) - budget
        a_lo, a_hi = lo - shape.min(), hi - shape.max()
        if a_hi <= a_lo:
            continue
        grid = np.linspace(a_lo, a_hi, 33)
        vals = np.array([gap(a) for a in grid])
        change = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
        if change.size == 0:
            continue
        k = change[0]
        a = optimize.brentq(gap, grid[k], grid[k + 1], xtol=1e-14)
        out.append(space.with_coefficients(np.clip(shape + a, lo, hi)))
    return out


# ---------------------------------------------------------------------------
# Bayesian variant
# ---------------------------------------------------------------------------

def bayes_optimal_schedule(draws, pbar, criterion, F: IncomeDistribution = None, penalty=1.0,
                           budget=0.0, space: SubsidySchedule = None, starts=5,
                           seed=0) -> TargetingResult:
    """Minimise ``-E_post[B] + penalty * E_post[(cost - budget)^2]``.

    ``draws`` holds posterior draws, each a ``ChoiceModel`` (sharing ``F``) or
    a ``(ChoiceModel, IncomeDistribution)`` pair.  ``penalty = 0`` removes the
    budget force; the solution then runs to the box and is flagged.
    """
    draws = list(draws)
    if not draws:
        raise ValueError("posterior draws must be non-empty")
    if penalty < 0:
        raise ValueError("penalty must be non-negative")
    pairs = [d if isinstance(d, tuple) else (d, F) for d in draws]
    if any(f is None for _, f in pairs):
        raise ValueError("income distribution missing for some draws")
    pbar = float(pbar)
    space = schedule_space(pairs[0][1], pbar) if space is None else space
    lo, hi = space.bounds
    evs = [_Evaluator(NodeProblem(m, pbar, criterion, f, (lo, hi)), space.design(f.incomes))
           for m, f in pairs]
    nd = len(evs)

    def fun(x):
        val, grad = 0.0, np.zeros_like(x)
        for ev in evs:
            b, cost = ev.values(x)
            gb, gc = ev.gradients(x)
            r = cost - budget
            val += (-b + penalty * r * r) / nd
            grad += (-gb + 2 * penalty * r * gc) / nd
        return val, grad

    n = space.coefficients.size
    candidates = [np.zeros(n)] + _random_starts(n, lo, hi, seed, max(starts - 1, 0))
    best = None
    tried = []
    for x0 in candidates:
        res = optimize.minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=[(lo, hi)] * n,
                                options={"maxiter": 1000, "ftol": 1e-15, "gtol": 1e-11})
        tried.append(-res.fun)
        if best is None or res.fun < best.fun - 1e-14:
            best = res
    coef = np.clip(best.x, lo, hi)
    _, grad = fun(coef)
    pg = float(np.max(np.abs(_projected(-grad, coef, lo, hi)), initial=0.0))
    flags = []
    if penalty == 0:
        flags.append("no_budget_force")
    if np.any(coef <= lo + 1e-10) or np.any(coef >= hi - 1e-10):
        flags.append("box_bound_active")
    benefits = [ev.values(coef) for ev in evs]
    mean_b = float(np.mean([b for b, _ in benefits]))
    mean_c = float(np.mean([c for _, c in benefits]))
    return TargetingResult(space.with_coefficients(coef), mean_b, mean_c, float(budget),
                           float(2 * penalty * (mean_c - budget)), pg, tuple(flags),
                           len(candidates), tuple(tried))


# ---------------------------------------------------------------------------
# two-point optimality checks
# ---------------------------------------------------------------------------

def semi_elasticity(model, price, y):
    """``eta = -d/dp log q_1(p, y)`` by a Richardson-extrapolated central difference."""
    d = bw._price_derivative(model, np.asarray(price, dtype=float), np.asarray(y, dtype=float))
    return -d / model.q1(price, y)


@dataclass(frozen=True)
class SocReport:
    bordered_determinant: float
    determinant_positive: bool
    ratio_conditions: tuple
    ratio_pass: tuple
    tangency: tuple
    tangency_gap: float
    tangency_pass: bool
    inconclusive: bool
    flags: tuple = ()

    def to_dict(self):
        return {"bordered_determinant": self.bordered_determinant,
                "determinant_positive": self.determinant_positive,
                "ratio_conditions": [list(map(float, r)) for r in self.ratio_conditions],
                "ratio_pass": list(self.ratio_pass), "tangency": list(map(float, self.tangency)),
                "tangency_gap": self.tangency_gap, "tangency_pass": self.tangency_pass,
                "inconclusive": self.inconclusive, "flags": list(self.flags)}


def soc_check(model: ChoiceModel, pbar, criterion, F: IncomeDistribution, solution,
              tol=1e-4, curvature_tol=1e-10) -> SocReport:
    """Second-order and tangency checks for a two-income-point solution.

    With per-node benefit ``b_k`` and cost ``c_k`` (weighted by ``pi_k``) and
    ``lambda = b'/c'``, the bordered Hessian of the Lagrangian is
    ``[[0, C1, C2], [C1, L11, 0], [C2, 0, L22]]`` with ``C_k = pi_k c_k'`` and
    ``L_kk = pi_k (b_k'' - lambda c_k'')``; a local maximum needs a positive
    determinant.  The ratio conditions ``b''/b' < c''/c'`` are sufficient.
    """
    if F.size != 2:
        raise ValueError("soc_check needs a two-point income distribution")
    s = solution.schedule(F.incomes) if isinstance(solution, TargetingResult) else \
        np.asarray(solution(F.incomes) if callable(solution) else solution, dtype=float)
    if np.any(pbar - s <= 0):
        raise ValueError("solution pushes the price to zero or below")
    problem = NodeProblem(model, pbar, criterion, F, (float(np.min(s)), float(np.max(s))))
    if np.any(pbar - s - problem.h <= 0):
        raise ValueError("solution too close to zero price for finite differences")
    b1, b2 = problem.derivatives(problem.benefit, s, 2)
    c1, c2 = problem.derivatives(problem.cost, s, 2)
    w = F.weights
    flags = []
    tiny = (np.abs(b1) < curvature_tol) | (np.abs(c1) < curvature_tol)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam_k = b1 / c1
        lam = float(np.mean(lam_k))
        L = w * (b2 - lam * c2)
        C = w * c1
        det = float(-C[0] ** 2 * L[1] - C[1] ** 2 * L[0])
        ratios = tuple((float(b2[k] / b1[k]), float(c2[k] / c1[k])) for k in range(2))
    ratio_pass = tuple(bool(r[0] < r[1]) for r in ratios)
    gap = float(abs(lam_k[0] - lam_k[1]))
    scale = max(1.0, float(np.max(np.abs(lam_k)))) if np.all(np.isfinite(lam_k)) else 1.0
    inconclusive = bool(tiny.any() or abs(det) < curvature_tol)
    if inconclusive:
        flags.append("zero_curvature")
    if model.income_invariant:
        flags.append("income_invariant_demand")
    return SocReport(det, bool(det > 0 and not inconclusive), ratios, ratio_pass,
                     tuple(map(float, lam_k)), gap,
                     bool(not inconclusive and gap <= tol * scale), inconclusive, tuple(flags))


def foc_identity_gap(model, pbar, F: IncomeDistribution, result: TargetingResult):
    """``(sigma_2 - sigma_1) - (1/eta_1 - 1/eta_2)`` at a two-point ATE optimum."""
    if F.size != 2:
        raise ValueError("the first-order identity is stated for two income points")
    s = result.schedule(F.incomes)
    eta = semi_elasticity(model, pbar - s, F.incomes)
    return float((s[1] - s[0]) - (1.0 / eta[0] - 1.0 / eta[1]))


def welfare_change_by_income(model, pbar, schedule, incomes, epsilon=0.0, truncation=None):
    """``Delta ASW(y)`` under ``schedule`` at each income (for redistribution plots)."""
    incomes = np.asarray(incomes, dtype=float)
    return bw.delta_asw_values(model, pbar, schedule(incomes), incomes, epsilon, truncation)


def zero_crossing(x, values):
    """First sign change of ``values`` along ``x`` (linear interpolation), or NaN."""
    x, v = np.asarray(x, dtype=float), np.asarray(values, dtype=float)
    idx = np.nonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)[0]
    if idx.size == 0:
        return math.nan
    k = idx[0]
    return float(x[k] - v[k] * (x[k + 1] - x[k]) / (v[k + 1] - v[k]))
