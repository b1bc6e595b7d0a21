"""Distribution of normalised indirect utility and social-welfare functionals.

At a budget point ``(p, y)`` the money-metric indirect utility ``W`` of a
random consumer satisfies ``W >= y`` and, for ``c >= y``,

    Pr[W <= c] = q_0(c - y + p_1, ..., c - y + p_J, c).

Average social welfare with inequality aversion ``eps`` follows by
integrating the survival function:

    E[W^(1-eps) / (1-eps)] = y^(1-eps)/(1-eps)
                             + int_0^inf (z+y)^-eps [1 - q_0(z + p, z + y)] dz.
"""
from dataclasses import dataclass

import numpy as np

from . import quadrature
from .choice_model import BudgetPoint, ChoiceModel, ModelError
from .quadrature import QuadratureConfig, QuadratureError


@dataclass(frozen=True)
class InequalityAversion:
    epsilon: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"inequality aversion must lie in [0, 1], got {self.epsilon}")


def _as_eps(aversion):
    if isinstance(aversion, InequalityAversion):
        return aversion.epsilon
    return InequalityAversion(float(aversion)).epsilon


def welfare_cdf(model: ChoiceModel, point: BudgetPoint, c):
    """``Pr[W(p, y, eta) <= c]``; accepts scalar or array ``c``."""
    c_arr = np.asarray(c, dtype=float)
    if not np.all(np.isfinite(c_arr)):
        raise ValueError("c must be finite")
    y, p = point.income, point.p
    cc = np.atleast_1d(c_arr)
    out = np.zeros(cc.shape)
    above = cc >= y
    if above.any():
        ca = cc[above]
        out[above] = model.q0((ca - y)[:, None] + p[None, :], ca)
    return out.reshape(c_arr.shape) if c_arr.ndim else float(out[0])


@dataclass(frozen=True)
class WelfareCdf:
    """The identified distribution of ``W`` at a fixed budget point."""

    model: ChoiceModel
    point: BudgetPoint

    def __call__(self, c):
        return welfare_cdf(self.model, self.point, c)

    @property
    def mass_at_income(self):
        return welfare_cdf(self.model, self.point, self.point.income)

    def quantile(self, u, tol=1e-9):
        return welfare_quantile(self.model, self.point, u, tol)


def survival_integrand(model, prices, incomes, eps):
    """``z -> (z + y)^-eps * [1 - q_0(p + z, y + z)]`` for each row of ``prices``."""
    prices = np.atleast_2d(prices)
    incomes = np.atleast_1d(incomes)

    def f(z):
        q0 = model.q0(prices[:, None, :] + z[:, :, None], incomes[:, None] + z)
        w = (incomes[:, None] + z) ** (-eps) if eps else 1.0
        return w * (1.0 - q0)
    return f


def resolve_upper(f, model, incomes, scale, truncation=None, config=quadrature.DEFAULT):
    """Truncation point of a half-line welfare integral.

    ``truncation`` may be ``None``/``"auto"`` (integrate until the integrand
    dies out), ``"support"`` (``y_max - y`` with ``y_max`` the model's income
    support, failing if the integrand is still above
    ``config.support_tail_tol`` there), or a number used the same way.
    """
    incomes = np.atleast_1d(incomes)
    if truncation is None or truncation == "auto":
        return quadrature.auto_upper(f, scale, config)
    if truncation == "support":
        if model.income_support is None:
            raise ModelError("model has no income support for the y_max - y truncation rule")
        upper = np.maximum(model.income_support[1] - incomes, 0.0)
    else:
        upper = np.broadcast_to(np.asarray(truncation, dtype=float), incomes.shape).copy()
    quadrature.check_tail(f, upper, config)
    return upper


def _scale_for(model, incomes):
    return np.full(np.atleast_1d(incomes).shape, model.money_scale)


def _breaks(model, prices, incomes):
    prices = np.atleast_2d(prices)
    incomes = np.broadcast_to(np.atleast_1d(incomes), (prices.shape[0],))
    return model.path_breaks(prices, incomes)


def survival_integral(model, prices, incomes, eps, truncation=None, config=quadrature.DEFAULT,
                      panels=None):
    """``int_0^zmax (z+y)^-eps [1 - q_0(p + z, y + z)] dz`` for each row."""
    prices = np.atleast_2d(np.asarray(prices, dtype=float))
    incomes = np.atleast_1d(np.asarray(incomes, dtype=float))
    f = survival_integrand(model, prices, incomes, eps)
    scale = _scale_for(model, incomes)
    upper = resolve_upper(f, model, incomes, scale, truncation, config)
    return quadrature.integrate(f, upper, scale, _breaks(model, prices, incomes), config, panels)


def asw(model: ChoiceModel, point: BudgetPoint, aversion=0.0, truncation=None,
        config: QuadratureConfig = quadrature.DEFAULT) -> float:
    """Average social welfare ``E[W^(1-eps)/(1-eps)]`` at ``point``.

    ``eps = 1`` is delegated to :func:`asw_epsilon_one` (``E[log W]``).
    """
    eps = _as_eps(aversion)
    if eps == 1.0:
        return asw_epsilon_one(model, point, truncation, config)
    y = point.income
    integral = survival_integral(model, point.p, y, eps, truncation, config)[0]
    return float(y ** (1.0 - eps) / (1.0 - eps) + integral)


def asw_epsilon_one(model: ChoiceModel, point: BudgetPoint, truncation=None,
                    config: QuadratureConfig = quadrature.DEFAULT) -> float:
    """``E[log W] = log y + int_0^zmax [1 - q_0(p + z, y + z)] / (z + y) dz``."""
    y = point.income
    return float(np.log(y) + survival_integral(model, point.p, y, 1.0, truncation, config)[0])


def welfare_quantile(model, point, u, tol=1e-9):
    """Right-continuous quantile ``inf{c : F(c) >= u}`` by vectorised bisection."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any((u <= 0) | (u >= 1)):
        raise ValueError("quantile levels must lie in (0, 1)")
    y = point.income
    mass = welfare_cdf(model, point, y)
    out = np.full(u.shape, y)
    todo = u > mass
    if not todo.any():
        return out
    uu = u[todo]
    lo = np.full(uu.shape, y)
    step = np.full(uu.shape, float(model.money_scale))
    hi = lo + step
    for _ in range(200):
        short = welfare_cdf(model, point, hi) < uu
        if not short.any():
            break
        step = np.where(short, 2.0 * step, step)
        hi = np.where(short, y + step, hi)
    else:
        raise QuadratureError("welfare quantile bracket could not be found")
    while np.any(hi - lo > tol * np.maximum(1.0, np.abs(hi))):
        mid = 0.5 * (lo + hi)
        below = welfare_cdf(model, point, mid) < uu
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out[todo] = hi
    return out


def welfare_inequality_index(model, point, index_kind="gini", epsilon=None, n_quantiles=512):
    """Gini or Atkinson index of the distribution of ``W``.

    Both are computed from ``n_quantiles`` midpoint quantile levels,
    ``u_k = (k + 1/2) / n``.  ``index_kind`` is ``"gini"`` or ``"atkinson"``
    (requires ``epsilon``), or a tuple ``("atkinson", eps)``.
    """
    if isinstance(index_kind, tuple):
        index_kind, epsilon = index_kind
    u = (np.arange(n_quantiles) + 0.5) / n_quantiles
    w = welfare_quantile(model, point, u)
    mean = w.mean()
    if index_kind == "gini":
        return float(np.mean((2.0 * u - 1.0) * w) / mean)
    if index_kind == "atkinson":
        eps = _as_eps(epsilon)
        if eps == 0.0:
            return 0.0
        if eps == 1.0:
            ede = np.exp(np.mean(np.log(w)))
        else:
            ede = np.mean(w ** (1.0 - eps)) ** (1.0 / (1.0 - eps))
        return float(1.0 - ede / mean)
    raise ValueError(f"unknown inequality index {index_kind!r}")
