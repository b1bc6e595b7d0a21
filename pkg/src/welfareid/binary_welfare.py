"""Welfare effects of a price subsidy on the inside good of a binary choice.

A subsidy ``sigma`` moves the price from ``pbar`` to ``pbar - sigma``
(``sigma < 0`` is a tax).  All functionals are computed from ``q_1`` alone:

* change in average social welfare (any ``eps >= 0``)
* average compensating variation
* average treatment effect on take-up
* deadweight loss and its two-term decomposition
* the marginal value of public funds at the status quo

The ``*_values`` functions are vectorised over ``(pbar, sigma, y)`` and accept
a fixed truncation/panel count so optimisers see a smooth objective.
"""
from dataclasses import dataclass

import numpy as np

from . import quadrature
from .choice_model import ChoiceModel, ModelError
from .welfare_distribution import resolve_upper


@dataclass(frozen=True)
class SubsidyScenario:
    base_price: float
    subsidy: float
    income: float
    aversion: float = 0.0

    def __post_init__(self):
        if not self.base_price > 0:
            raise ValueError("base price must be positive")
        if not self.base_price - self.subsidy > 0:
            raise ValueError("post-subsidy price must stay positive")
        if not self.income > 0:
            raise ValueError("income must be positive")
        if self.aversion < 0:
            raise ValueError("inequality aversion must be non-negative")


def _require_binary(model):
    if model.J != 1:
        raise ModelError(f"binary welfare functionals need J = 1, model has J = {model.J}")


def _arrays(pbar, sigma, y):
    pbar, sigma, y = np.broadcast_arrays(*(np.atleast_1d(np.asarray(v, dtype=float)) for v in (pbar, sigma, y)))
    return pbar.ravel(), sigma.ravel(), y.ravel()


def _breaks(model, *paths):
    """Non-smooth points of each ``(price, income)`` path, stacked per row."""
    parts = [model.path_breaks(p[:, None], y) for p, y in paths]
    if any(b is None for b in parts):
        return None
    return np.concatenate(parts, axis=1)


def delta_asw_integrand(model, pbar, sigma, y, eps):
    def f(z):
        w = (y[:, None] + z) ** (-eps) if eps else 1.0
        q_sub = model.q1(pbar[:, None] - sigma[:, None] + z, y[:, None] + z)
        q_base = model.q1(pbar[:, None] + z, y[:, None] + z)
        return w * (q_sub - q_base)
    return f


def delta_asw_values(model, pbar, sigma, y, eps=0.0, truncation=None, upper=None, panels=None,
                     config=quadrature.DEFAULT):
    """Change in ASW, ``int_0^zmax (z+y)^-eps [q1(pbar-sigma+z, y+z) - q1(pbar+z, y+z)] dz``."""
    _require_binary(model)
    pbar, sigma, y = _arrays(pbar, sigma, y)
    f = delta_asw_integrand(model, pbar, sigma, y, eps)
    scale = np.full(y.shape, model.money_scale)
    if upper is None:
        upper = resolve_upper(f, model, y, scale, truncation, config)
    breaks = _breaks(model, (pbar - sigma, y), (pbar, y))
    return quadrature.integrate(f, upper, scale, breaks, config, panels)


def acv_values(model, pbar, sigma, y, panels=None, config=quadrature.DEFAULT):
    """Average CV, ``int_0^sigma q1(pbar - sigma + z, y + z) dz``.

    For a tax (``sigma < 0``) this is minus the CV of the reverse move,
    ``-int_0^|sigma| q1(pbar + z, y + z) dz``.
    """
    _require_binary(model)
    pbar, sigma, y = _arrays(pbar, sigma, y)
    start = np.minimum(pbar, pbar - sigma)
    length = np.abs(sigma)

    def f(z):
        return model.q1(start[:, None] + z, y[:, None] + z)

    scale = np.full(y.shape, model.money_scale)
    val = quadrature.integrate(f, length, scale, _breaks(model, (start, y)), config, panels)
    return np.sign(sigma) * val


def ate_values(model, pbar, sigma, y):
    _require_binary(model)
    pbar, sigma, y = _arrays(pbar, sigma, y)
    return model.q1(pbar - sigma, y) - model.q1(pbar, y)


def cost_values(model, pbar, sigma, y):
    """Per-capita programme cost ``sigma * q1(pbar - sigma, y)`` (negative for taxes)."""
    pbar, sigma, y = _arrays(pbar, sigma, y)
    return sigma * model.q1(pbar - sigma, y)


# ---------------------------------------------------------------------------
# scenario-level API
# ---------------------------------------------------------------------------

def delta_asw(model: ChoiceModel, s: SubsidyScenario, truncation=None,
              config=quadrature.DEFAULT) -> float:
    return float(delta_asw_values(model, s.base_price, s.subsidy, s.income, s.aversion,
                                  truncation, config=config)[0])


def acv(model: ChoiceModel, s: SubsidyScenario, config=quadrature.DEFAULT) -> float:
    return float(acv_values(model, s.base_price, s.subsidy, s.income, config=config)[0])


def ate(model: ChoiceModel, s: SubsidyScenario) -> float:
    return float(ate_values(model, s.base_price, s.subsidy, s.income)[0])


@dataclass(frozen=True)
class DeadweightLoss:
    """DWL under ``eps = 0`` with its decomposition.

    ``price_term`` integrates the demand drop along the subsidised price range
    and is non-negative; ``income_term`` carries the income effect and, for a
    normal good, is non-positive under a subsidy and non-negative under a tax.
    """

    total: float
    price_term: float
    income_term: float
    cost: float
    delta_asw: float


def dwl(model: ChoiceModel, s: SubsidyScenario, truncation=None,
        config=quadrature.DEFAULT) -> DeadweightLoss:
    _require_binary(model)
    pbar, sigma, y = s.base_price, s.subsidy, s.income
    q_sub = float(model.q1(pbar - sigma, y))
    cost = sigma * q_sub
    d = delta_asw_values(model, pbar, sigma, y, 0.0, truncation, config=config)[0]
    # oriented int_0^sigma q1(pbar - sigma + z, y + z) dz
    a, b = (0.0, sigma) if sigma >= 0 else (sigma, 0.0)

    def along(z):
        return model.q1(pbar - sigma + a + z, y + a + z)
    breaks = _breaks(model, (np.array([pbar - sigma + a]), np.array([y + a])))
    s_or = np.sign(sigma) * quadrature.integrate(along, np.array([b - a]), model.money_scale,
                                                 breaks, config)[0]
    price_term = cost - s_or

    pb, sg, yy = _arrays(pbar, sigma, y)

    def income_gap(z):
        return model.q1(pb[:, None] + z, yy[:, None] + z) - model.q1(pb[:, None] + z, yy[:, None] + sg[:, None] + z)
    scale = np.full(1, model.money_scale)
    upper = resolve_upper(income_gap, model, yy, scale, truncation, config)
    income_term = quadrature.integrate(income_gap, upper, scale,
                                       _breaks(model, (pb, yy), (pb, yy + sg)), config)[0]
    return DeadweightLoss(float(cost - d), float(price_term), float(income_term), float(cost), float(d))


def _price_derivative(model, p, y):
    """Central difference in price, one Richardson step."""
    h = 1e-4 * np.maximum(1.0, np.abs(p))

    def cd(step):
        return (model.q1(p + step, y) - model.q1(p - step, y)) / (2.0 * step)
    return (4.0 * cd(0.5 * h) - cd(h)) / 3.0


def _income_derivative(model, p, y):
    h = 1e-4 * np.maximum(1.0, np.abs(y))

    def cd(step):
        return (model.q1(p, y + step) - model.q1(p, y - step)) / (2.0 * step)
    return (4.0 * cd(0.5 * h) - cd(h)) / 3.0


@dataclass(frozen=True)
class Mvpf:
    ratio: float
    numerator: float
    denominator: float


def mvpf_parts(model: ChoiceModel, pbar, y, method="path", truncation=None,
               config=quadrature.DEFAULT) -> Mvpf:
    """Numerator ``-int_0^zmax d/dp q1(pbar + z, y + z) dz`` and denominator ``q1(pbar, y)``.

    ``method="direct"`` integrates the price derivative pointwise.
    ``method="path"`` (default) uses
    ``d/dz q1(pbar+z, y+z) = d_p q1 + d_y q1``, i.e. the numerator equals
    ``q1(pbar, y) - q1(pbar+zmax, y+zmax) + int d_y q1 dz``; the two agree for
    differentiable demand and the path form also accounts for jumps in ``q1``.
    """
    _require_binary(model)
    den = float(model.q1(pbar, y))
    if den < 1e-10:
        raise ArithmeticError(f"q1(pbar, y) = {den:.3g}: MVPF undefined")
    pb, yy = np.array([float(pbar)]), np.array([float(y)])
    scale = np.full(1, model.money_scale)
    if method == "direct":
        def f(z):
            return -_price_derivative(model, pb[:, None] + z, yy[:, None] + z)
        upper = resolve_upper(f, model, yy, scale, truncation, config)
        num = quadrature.integrate(f, upper, scale, None, config)[0]
    elif method == "path":
        def g(z):
            return _income_derivative(model, pb[:, None] + z, yy[:, None] + z)

        def tail(z):
            return model.q1(pb[:, None] + z, yy[:, None] + z)
        if model.income_invariant:
            upper = resolve_upper(tail, model, yy, scale, truncation, config)
            income_part = 0.0
        else:
            upper = np.maximum(resolve_upper(tail, model, yy, scale, truncation, config),
                               resolve_upper(g, model, yy, scale, truncation, config))
            income_part = quadrature.integrate(g, upper, scale, _breaks(model, (pb, yy)), config)[0]
        end = float(model.q1(pbar + upper[0], y + upper[0]))
        num = den - end + income_part
    else:
        raise ValueError(f"unknown MVPF method {method!r}")
    return Mvpf(float(num / den), float(num), den)


def mvpf(model: ChoiceModel, pbar, y, **kwargs) -> float:
    return mvpf_parts(model, pbar, y, **kwargs).ratio


def mvpf_linear_net_benefit(model: ChoiceModel, pbar, y, sigma, **kwargs) -> float:
    """First-order net benefit ``sigma * (numerator - denominator)``."""
    parts = mvpf_parts(model, pbar, y, **kwargs)
    return float(sigma * (parts.numerator - parts.denominator))


def net_benefit(model: ChoiceModel, pbar, y, sigma, truncation=None) -> float:
    """Exact ``eps = 0`` net benefit ``delta_asw - sigma * q1(pbar - sigma, y)`` (= -DWL)."""
    d = delta_asw_values(model, pbar, sigma, y, 0.0, truncation)[0]
    return float(d - sigma * model.q1(pbar - sigma, y))


def sigma_grid_table(model: ChoiceModel, pbar, y, sigmas, truncation=None):
    """Rows ``(sigma, dASW, ACV, ATE, DWL, MVPF-linear)`` over a subsidy grid."""
    sigmas = np.asarray(sigmas, dtype=float)
    d = delta_asw_values(model, pbar, sigmas, y, 0.0, truncation)
    a = acv_values(model, pbar, sigmas, y)
    t = ate_values(model, pbar, sigmas, y)
    cost = cost_values(model, pbar, sigmas, y)
    parts = mvpf_parts(model, pbar, y, truncation=truncation)
    lin = sigmas * (parts.numerator - parts.denominator)
    return np.column_stack([sigmas, d, a, t, cost - d, lin])
