"""Monte Carlo ground truth from fully specified utility models.

Agents are drawn from the model's heterogeneity distribution with a
counter-based generator (Philox keyed by the seed), so populations are
reproducible across platforms.  Each agent's indirect utility is computed
from its utilities directly, never from choice probabilities, which keeps
this module independent of the identification formulas it checks.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .choice_model import BudgetPoint, ChoiceModel, ModelError, UtilityDraws

BISECTION_TOL = 1e-10


def make_rng(seed):
    return np.random.Generator(np.random.Philox(key=int(seed)))


def draw_population(model: ChoiceModel, n: int, seed) -> UtilityDraws:
    if not model.synthetic:
        raise ModelError("the Monte Carlo oracle needs a model with known utilities")
    if n < 1:
        raise ValueError("population size must be positive")
    return model.draw_utilities(int(n), make_rng(seed))


@dataclass(frozen=True)
class SimulatedPopulation:
    """Simulated agents evaluated at one budget point."""

    draws: UtilityDraws = field(repr=False)
    point: BudgetPoint
    welfare: np.ndarray = field(repr=False)
    choice: np.ndarray = field(repr=False)
    seed: int
    model_description: dict = field(repr=False)
    width: float = 10.0

    @property
    def n(self):
        return self.welfare.size

    def at(self, point: BudgetPoint) -> "SimulatedPopulation":
        """Same agents at another budget point (common random numbers)."""
        w, ch = kernels.agent_welfare(self.draws.intercepts, self.draws.slopes, self.draws.kinds,
                                      point.p, point.income, self.width, BISECTION_TOL)
        return SimulatedPopulation(self.draws, point, w, ch, self.seed, self.model_description,
                                   self.width)

    def shares(self):
        J = self.draws.intercepts.shape[1] - 1
        return np.bincount(self.choice, minlength=J + 1) / self.n

    def ecdf(self, c):
        w = np.sort(self.welfare)
        return np.searchsorted(w, np.asarray(c, dtype=float), side="right") / self.n

    def mean_and_se(self, values):
        values = np.asarray(values, dtype=float)
        return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))


def simulate_welfare(model: ChoiceModel, point: BudgetPoint, n: int, seed) -> SimulatedPopulation:
    """Draw ``n`` agents and compute each one's ``W(p, y, eta)``."""
    if point.J != model.J:
        raise ModelError(f"budget point has {point.J} prices, model has J={model.J}")
    draws = draw_population(model, n, seed)
    width = 10.0 * model.money_scale
    w, ch = kernels.agent_welfare(draws.intercepts, draws.slopes, draws.kinds, point.p,
                                  point.income, width, BISECTION_TOL)
    if np.any(np.isnan(w)):
        raise ArithmeticError("bisection bracket failure: U0 is not invertible on the bracket")
    return SimulatedPopulation(draws, point, w, ch, int(seed), model.to_dict(), width)


def agent_cv(model_or_draws, y, p_from, p_to, n=None, seed=None, width=None):
    """Agent-level compensating variation ``CV(y, p_from, p_to, eta)``.

    Solves ``W(p_to, y + CV) = W(p_from, y)`` by bisection.  Prices may be
    ``inf`` to remove alternatives.  ``model_or_draws`` is either
    :class:`UtilityDraws` or a synthetic model together with ``n`` and
    ``seed``.
    """
    if isinstance(model_or_draws, UtilityDraws):
        draws = model_or_draws
        width = 10.0 if width is None else width
    else:
        draws = draw_population(model_or_draws, n, seed)
        width = 10.0 * model_or_draws.money_scale if width is None else width
    p_from = np.atleast_1d(np.asarray(p_from, dtype=float))
    p_to = np.atleast_1d(np.asarray(p_to, dtype=float))
    if np.array_equal(p_from, p_to):
        return np.zeros(draws.n)
    cv = kernels.agent_cv(draws.intercepts, draws.slopes, draws.kinds, p_from, p_to, float(y),
                          width, BISECTION_TOL)
    if np.any(np.isnan(cv)):
        raise ArithmeticError("no root for the compensating variation in the search bracket")
    return cv


def agent_welfare(draws: UtilityDraws, prices, y, width=10.0):
    """``W(p, y, eta)`` for given draws (prices may contain ``inf``)."""
    w, _ = kernels.agent_welfare(draws.intercepts, draws.slopes, draws.kinds,
                                 np.atleast_1d(np.asarray(prices, dtype=float)), float(y),
                                 width, BISECTION_TOL)
    return w


def cdf_sup_distance(samples, cdf, atom=None):
    """Kolmogorov distance between the empirical CDF of ``samples`` and ``cdf``.

    ``cdf`` must be right-continuous and vectorised.  ``atom`` marks the one
    point where ``cdf`` may jump from zero (the mass at ``W = y``); elsewhere
    the model CDF is treated as continuous.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    vals, idx = np.unique(x, return_index=True)
    counts = np.diff(np.append(idx, n))
    upper = np.cumsum(counts) / n
    lower = upper - counts / n
    F = cdf(vals)
    F_left = F.copy()
    if atom is not None:
        F_left[vals <= atom] = 0.0
    return float(max(np.max(np.abs(F - upper)), np.max(np.abs(F_left - lower))))
