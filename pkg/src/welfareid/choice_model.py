"""Structural choice-probability models.

Every model maps a budget set (inside-good prices, income) to probabilities
``q_0..q_J`` over the outside option and ``J`` inside alternatives.  The
welfare formulas downstream consume nothing else.

Three families are provided:

* :class:`QuasilinearModel` - utility additive in the numeraire, so demand
  does not depend on income.  Taste offsets ``h_j - h_0`` are independent
  scalar random variables in money units.
* :class:`SyntheticModel` - fully specified random utilities with income
  effects, used as ground truth for the Monte Carlo oracle.
* :class:`EstimatedSplineProbit` - the fitted binary demand
  ``Phi(beta_p p + spline(y) + x'beta)``.
"""
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special, stats

from . import kernels
from .kernels import LINEAR, LOG1P, LOGIT, PROBIT
from .splines import SplineBasis

SCHEMA = "welfareid.model/1"

_TRANSFORMS = {"linear": LINEAR, "log1p": LOG1P}
_SHOCKS = {"logit": LOGIT, "probit": PROBIT}


class ModelError(ValueError):
    """Invalid model specification or evaluation request."""


@dataclass(frozen=True)
class BudgetPoint:
    """Prices of the ``J`` inside alternatives and income; the outside price is 0."""

    prices: tuple
    income: float

    def __init__(self, prices, income):
        p = np.atleast_1d(np.asarray(prices, dtype=float))
        if p.ndim != 1 or p.size < 1:
            raise ModelError("prices must be a non-empty vector")
        if np.any(np.isnan(p)) or np.any(p < 0):
            raise ModelError(f"prices must be non-negative, got {p}")
        if not (np.isfinite(income) and income > 0):
            raise ModelError(f"income must be positive, got {income}")
        object.__setattr__(self, "prices", tuple(float(v) for v in p))
        object.__setattr__(self, "income", float(income))

    @property
    def p(self):
        return np.array(self.prices)

    @property
    def J(self):
        return len(self.prices)


# ---------------------------------------------------------------------------
# scalar taste distributions (money units)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Offset:
    """Distribution of a taste offset ``h_j - h_0``.

    ``kind`` is one of ``logistic``, ``normal``, ``degenerate`` (point mass at
    ``loc``) or ``discrete`` (``values`` with ``probs``).
    """

    kind: str
    loc: float = 0.0
    scale: float = 1.0
    values: tuple = ()
    probs: tuple = ()

    def __post_init__(self):
        if self.kind not in ("logistic", "normal", "degenerate", "discrete"):
            raise ModelError(f"unknown offset distribution {self.kind!r}")
        if not math.isfinite(self.loc):
            raise ModelError("offset location must be finite")
        if self.kind in ("logistic", "normal") and not (self.scale > 0 and math.isfinite(self.scale)):
            raise ModelError("offset scale must be positive and finite")
        if self.kind == "discrete":
            v = np.asarray(self.values, dtype=float)
            w = np.asarray(self.probs, dtype=float)
            if v.size == 0 or v.shape != w.shape or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
                raise ModelError("discrete offset needs values and probabilities summing to 1")
            if not np.all(np.isfinite(v)):
                raise ModelError("discrete offset values must be finite")

    @classmethod
    def logit(cls, alpha, beta):
        """Offset giving ``q_1 = Lambda(alpha - beta * p)``."""
        return cls("logistic", alpha / beta, 1.0 / beta)

    @property
    def continuous(self):
        return self.kind in ("logistic", "normal")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "logistic":
            return special.expit((x - self.loc) / self.scale)
        if self.kind == "normal":
            return special.ndtr((x - self.loc) / self.scale)
        if self.kind == "degenerate":
            return (x >= self.loc).astype(float)
        v = np.asarray(self.values)
        w = np.asarray(self.probs)
        return ((v <= x[..., None]) * w).sum(axis=-1)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "logistic":
            return special.expit(-(x - self.loc) / self.scale)
        if self.kind == "normal":
            return special.ndtr(-(x - self.loc) / self.scale)
        return 1.0 - self.cdf(x)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "logistic":
            e = special.expit((x - self.loc) / self.scale)
            return e * (1.0 - e) / self.scale
        if self.kind == "normal":
            return stats.norm.pdf(x, self.loc, self.scale)
        raise ModelError("point-mass offsets have no density")

    def sample(self, rng, n):
        if self.kind == "logistic":
            return rng.logistic(self.loc, self.scale, n)
        if self.kind == "normal":
            return rng.normal(self.loc, self.scale, n)
        if self.kind == "degenerate":
            return np.full(n, self.loc)
        return rng.choice(np.asarray(self.values, dtype=float), size=n, p=np.asarray(self.probs))

    @property
    def spread(self):
        if self.continuous:
            return self.scale
        if self.kind == "degenerate":
            return max(1.0, abs(self.loc))
        v = np.asarray(self.values, dtype=float)
        return max(1.0, float(v.max() - v.min()))

    def jumps(self):
        if self.kind == "degenerate":
            return np.array([self.loc])
        if self.kind == "discrete":
            return np.asarray(self.values, dtype=float)
        return np.empty(0)

    def to_dict(self):
        d = {"kind": self.kind, "loc": self.loc, "scale": self.scale}
        if self.kind == "discrete":
            d["values"] = list(self.values)
            d["probs"] = list(self.probs)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], float(d.get("loc", 0.0)), float(d.get("scale", 1.0)),
                   tuple(float(v) for v in d.get("values", ())),
                   tuple(float(v) for v in d.get("probs", ())))


@dataclass(frozen=True)
class UtilityDraws:
    """Simulated utilities ``U_j(n) = intercepts[:, j] + slopes[:, j] * phi_j(n)``."""

    intercepts: np.ndarray
    slopes: np.ndarray
    kinds: np.ndarray

    @property
    def n(self):
        return self.intercepts.shape[0]


# ---------------------------------------------------------------------------
# model base
# ---------------------------------------------------------------------------

class ChoiceModel:
    """Structural choice probabilities ``q_j(p, y)``.

    Subclasses implement :meth:`_probs` on already-broadcast arrays.  Models
    are immutable after construction and safe to share across threads.
    """

    kind = "abstract"
    J: int = 1
    covariates: tuple = ()
    #: (y_min, y_max) of the income support the model was built on, if any
    income_support: Optional[tuple] = None

    def probs(self, prices, incomes):
        """All choice probabilities, shape ``(..., J + 1)``.

        ``prices`` has trailing dimension ``J``; leading dimensions broadcast
        against ``incomes``.
        """
        prices = np.asarray(prices, dtype=float)
        incomes = np.asarray(incomes, dtype=float)
        if prices.ndim == 0 or prices.shape[-1] != self.J:
            if self.J == 1:
                prices = prices[..., None]
            else:
                raise ModelError(f"expected {self.J} prices in the last axis")
        shape = np.broadcast_shapes(prices.shape[:-1], incomes.shape)
        P = np.broadcast_to(prices, shape + (self.J,)).reshape(-1, self.J)
        Y = np.broadcast_to(incomes, shape).reshape(-1)
        return self._probs(P, Y).reshape(shape + (self.J + 1,))

    def q0(self, prices, incomes):
        return self.probs(prices, incomes)[..., 0]

    def q1(self, prices, incomes):
        """Probability of the first inside alternative (binary models: demand).

        For binary models ``prices`` holds one price per entry and broadcasts
        element-wise against ``incomes`` (no trailing alternative axis), so a
        column of shape ``(E, 1)`` is ``E`` prices, not ``E`` budget points.
        """
        if self.J == 1:
            return self.probs(np.asarray(prices, dtype=float)[..., None], incomes)[..., 1]
        return self.probs(prices, incomes)[..., 1]

    def price_breaks(self, prices):
        """Shifts ``z`` at which ``q(p + z, y + z)`` jumps; ``None`` if continuous."""
        return None

    def income_kinks(self, incomes):
        """Shifts ``z`` at which ``q(p + z, y + z)`` has a kink in income; ``None`` if smooth."""
        return None

    def path_breaks(self, prices, incomes):
        """All shifts ``z`` where ``q(p + z, y + z)`` is not smooth, shape ``(E, K)`` or ``None``."""
        parts = [b for b in (self.price_breaks(np.atleast_2d(prices)),
                             self.income_kinks(np.atleast_1d(incomes))) if b is not None]
        return np.concatenate(parts, axis=1) if parts else None

    @property
    def money_scale(self):
        return 1.0

    @property
    def income_invariant(self):
        return False

    @property
    def synthetic(self):
        return False

    def draw_utilities(self, n, rng):
        raise ModelError(f"{self.kind} models have no simulable utilities")

    def _probs(self, P, Y):  # pragma: no cover - abstract
        raise NotImplementedError

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


# ---------------------------------------------------------------------------
# quasilinear
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuasilinearSpec:
    taste_offsets: tuple


class QuasilinearModel(ChoiceModel):
    """``U_j = h_j(eta) + y - p_j``; demand independent of income.

    With ``J > 1`` the offsets are independent and must be continuous.
    """

    kind = "quasilinear"
    _inside_panels = 128

    def __init__(self, offsets: Sequence[Offset], covariates=(), income_support=None):
        offsets = tuple(offsets)
        if not offsets:
            raise ModelError("quasilinear model needs at least one taste offset")
        for o in offsets:
            if not isinstance(o, Offset):
                raise ModelError(f"not an Offset: {o!r}")
        if len(offsets) > 1 and not all(o.continuous for o in offsets):
            raise ModelError("multinomial quasilinear models need continuous offsets")
        self.offsets = offsets
        self.J = len(offsets)
        self.covariates = tuple(covariates)
        self.income_support = None if income_support is None else tuple(income_support)

    @property
    def income_invariant(self):
        return True

    @property
    def synthetic(self):
        return True

    @property
    def money_scale(self):
        return max(o.spread for o in self.offsets)

    def _probs(self, P, Y):
        out = np.empty((P.shape[0], self.J + 1))
        if self.J == 1:
            o = self.offsets[0]
            out[:, 1] = o.sf(P[:, 0])
            out[:, 0] = o.cdf(P[:, 0])
            return out
        cdfs = np.column_stack([o.cdf(P[:, j]) for j, o in enumerate(self.offsets)])
        out[:, 0] = np.prod(cdfs, axis=1)
        from .quadrature import integrate
        # q_j = int_0^inf f_j(t + p_j) prod_{k != j} F_k(t + p_k) dt, t = surplus of j
        far = np.array([o.loc + 40.0 * o.scale for o in self.offsets])
        upper = np.maximum(np.max(far[None, :] - P, axis=1), self.money_scale)
        for j, oj in enumerate(self.offsets):
            def f(t, j=j, oj=oj):
                val = oj.pdf(t + P[:, j:j + 1])
                for k, ok in enumerate(self.offsets):
                    if k != j:
                        val = val * ok.cdf(t + P[:, k:k + 1])
                return val
            out[:, j + 1] = integrate(f, upper, scale=self.money_scale, panels=self._inside_panels)
        inside = out[:, 1:]
        tot = inside.sum(axis=1, keepdims=True)
        # quadrature error is far below 1e-12 relative; keep q0 exact
        out[:, 1:] = np.where(tot > 0, inside / np.where(tot > 0, tot, 1.0), 0.0) * (1.0 - out[:, :1])
        return out

    def price_breaks(self, prices):
        prices = np.atleast_2d(np.asarray(prices, dtype=float))
        if self.J != 1 or self.offsets[0].continuous:
            return None
        # 1 - q0(p + z) = Pr[d > p + z] jumps at z = d - p
        return self.offsets[0].jumps()[None, :] - prices[:, :1]

    def draw_utilities(self, n, rng):
        ic = np.zeros((n, self.J + 1))
        for j, o in enumerate(self.offsets):
            ic[:, j + 1] = o.sample(rng, n)
        return UtilityDraws(ic, np.ones((n, self.J + 1)), np.zeros(self.J + 1, dtype=np.int64))

    def to_dict(self):
        d = {"schema": SCHEMA, "kind": self.kind,
             "offsets": [o.to_dict() for o in self.offsets],
             "covariates": list(self.covariates)}
        if self.income_support is not None:
            d["income_support"] = list(self.income_support)
        return d


def make_quasilinear(spec: QuasilinearSpec, **kwargs):
    return QuasilinearModel(spec.taste_offsets, **kwargs)


# ---------------------------------------------------------------------------
# synthetic random utility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UtilitySpec:
    """Deterministic part of ``U_j(n, eta) = a_j + eps_j + b * m_j * phi_j(n)``.

    Index 0 is the outside option.
    """

    intercepts: tuple
    money_slopes: tuple
    transforms: tuple

    def __post_init__(self):
        n = len(self.intercepts)
        if n < 2 or len(self.money_slopes) != n or len(self.transforms) != n:
            raise ModelError("utility spec needs equal-length entries for J + 1 >= 2 alternatives")
        for t in self.transforms:
            if t not in _TRANSFORMS:
                raise ModelError(f"unknown transform {t!r}")


@dataclass(frozen=True)
class HeterogeneitySpec:
    """Distribution of ``eta``.

    ``shock`` is ``logit`` (i.i.d. Gumbel on every alternative) or ``probit``
    (one normal shock on alternative 1, binary only).  The money coefficient
    ``b`` is log-normal with parameters ``(money_mu, money_sd)``.
    """

    shock: str = "logit"
    shock_scale: float = 1.0
    money_mu: float = 0.0
    money_sd: float = 0.0
    nodes: int = 48


class SyntheticModel(ChoiceModel):
    """Random-utility model with known utilities and income effects.

    Choice probabilities integrate the additive shocks in closed form and the
    random money coefficient by Gauss-Hermite quadrature, so ``q`` is smooth
    and deterministic.
    """

    kind = "synthetic"

    def __init__(self, utilities: UtilitySpec, heterogeneity: HeterogeneitySpec, seed=0,
                 covariates=(), income_support=None):
        self.utilities = utilities
        self.heterogeneity = heterogeneity
        self.seed = int(seed)
        self.J = len(utilities.intercepts) - 1
        self.covariates = tuple(covariates)
        self.income_support = None if income_support is None else tuple(income_support)
        h = heterogeneity
        if h.shock not in _SHOCKS:
            raise ModelError(f"unknown shock {h.shock!r}")
        if h.shock == "probit" and self.J != 1:
            raise ModelError("probit shocks are only supported for binary models")
        vals = [*utilities.intercepts, *utilities.money_slopes, h.shock_scale, h.money_mu, h.money_sd]
        if not all(math.isfinite(v) for v in vals):
            raise ModelError("model parameters not finite")
        if not h.shock_scale > 0 or h.money_sd < 0:
            raise ModelError("shock scale must be positive and money_sd non-negative")
        self._a = np.asarray(utilities.intercepts, dtype=float)
        self._m = np.asarray(utilities.money_slopes, dtype=float)
        self._kinds = np.asarray([_TRANSFORMS[t] for t in utilities.transforms], dtype=np.int64)
        if h.money_sd == 0:
            self._b_nodes = np.array([math.exp(h.money_mu)])
            self._b_weights = np.array([1.0])
        else:
            x, w = special.roots_hermitenorm(int(h.nodes))
            self._b_nodes = np.exp(h.money_mu + h.money_sd * x)
            self._b_weights = w / w.sum()

    @property
    def synthetic(self):
        return True

    @property
    def income_invariant(self):
        return bool(np.all(self._kinds == LINEAR) and np.all(self._m == self._m[0]))

    @property
    def money_scale(self):
        h = self.heterogeneity
        b_low = math.exp(h.money_mu - 2.0 * h.money_sd)
        m0 = abs(self._m[0]) if self._m[0] != 0 else 1.0
        return max(1.0, h.shock_scale / (b_low * m0))

    def _probs(self, P, Y):
        return kernels.choice_probs(P, Y, self._a, self._m, self._kinds, self._b_nodes,
                                    self._b_weights, _SHOCKS[self.heterogeneity.shock],
                                    self.heterogeneity.shock_scale)

    def draw_utilities(self, n, rng):
        h = self.heterogeneity
        b = np.exp(h.money_mu + h.money_sd * rng.standard_normal(n))
        if h.shock == "logit":
            eps = rng.gumbel(0.0, h.shock_scale, (n, self.J + 1))
        else:
            eps = np.zeros((n, 2))
            eps[:, 1] = rng.normal(0.0, h.shock_scale, n)
        return UtilityDraws(self._a[None, :] + eps, b[:, None] * self._m[None, :], self._kinds.copy())

    def validate(self, n_eta=1000, n_grid=20, rng=None):
        """Check strict monotonicity in the numeraire on a sample of ``eta``."""
        rng = np.random.default_rng(self.seed) if rng is None else rng
        draws = self.draw_utilities(n_eta, rng)
        grid = np.linspace(-0.5 * self.money_scale, 50.0 * self.money_scale, n_grid)
        for j in range(self.J + 1):
            u = draws.intercepts[:, j:j + 1] + draws.slopes[:, j:j + 1] * kernels.phi(draws.kinds[j], grid)[None, :]
            if not np.all(np.diff(u, axis=1) > 0):
                raise ModelError(f"utility of alternative {j} is not strictly increasing in the numeraire")

    def to_dict(self):
        u, h = self.utilities, self.heterogeneity
        d = {"schema": SCHEMA, "kind": self.kind, "seed": self.seed,
             "utilities": {"intercepts": list(u.intercepts), "money_slopes": list(u.money_slopes),
                           "transforms": list(u.transforms)},
             "heterogeneity": {"shock": h.shock, "shock_scale": h.shock_scale,
                               "money_mu": h.money_mu, "money_sd": h.money_sd, "nodes": h.nodes},
             "covariates": list(self.covariates)}
        if self.income_support is not None:
            d["income_support"] = list(self.income_support)
        return d


def make_synthetic(utilities: UtilitySpec, heterogeneity: HeterogeneitySpec, seed=0, **kwargs):
    """Build and validate a synthetic random-utility model."""
    model = SyntheticModel(utilities, heterogeneity, seed, **kwargs)
    model.validate()
    return model


# ---------------------------------------------------------------------------
# estimated binary spline probit
# ---------------------------------------------------------------------------

class EstimatedSplineProbit(ChoiceModel):
    """``q_1(p, y) = Phi(beta_p p + B(y) beta_y + x'beta_x)`` at a fixed covariate profile.

    Income is clamped to the spline support before evaluation.
    """

    kind = "estimated_spline_probit"
    J = 1

    def __init__(self, beta_p, beta_y, basis: SplineBasis, beta_x=(), covariates=()):
        self.beta_p = float(beta_p)
        self.beta_y = np.asarray(beta_y, dtype=float)
        self.basis = basis
        self.beta_x = np.asarray(beta_x, dtype=float)
        self.covariates = tuple(float(v) for v in covariates)
        if self.beta_y.size != basis.size:
            raise ModelError(f"expected {basis.size} spline coefficients, got {self.beta_y.size}")
        if self.beta_x.size != len(self.covariates):
            raise ModelError("covariate profile does not match covariate coefficients")
        if not (np.isfinite(self.beta_p) and np.all(np.isfinite(self.beta_y)) and np.all(np.isfinite(self.beta_x))):
            raise ModelError("model parameters not finite")
        self.income_support = (basis.y_min, basis.y_max)
        self._offset = float(self.beta_x @ np.asarray(self.covariates)) if self.covariates else 0.0

    @property
    def money_scale(self):
        if self.beta_p < 0:
            return 1.0 / abs(self.beta_p)
        return self.basis.y_max - self.basis.y_min

    def index(self, prices, incomes):
        prices = np.asarray(prices, dtype=float)
        y = np.clip(np.asarray(incomes, dtype=float), self.basis.y_min, self.basis.y_max)
        shape = np.broadcast_shapes(prices.shape, y.shape)
        spl = self.basis.evaluate(np.broadcast_to(y, shape).ravel(), self.beta_y).reshape(shape)
        return self.beta_p * prices + spl + self._offset

    def income_kinks(self, incomes):
        incomes = np.asarray(incomes, dtype=float)
        return np.column_stack([self.basis.y_min - incomes, self.basis.y_max - incomes])

    def _probs(self, P, Y):
        q1 = special.ndtr(self.index(P[:, 0], Y))
        return np.column_stack([1.0 - q1, q1])

    def to_dict(self):
        return {"schema": SCHEMA, "kind": self.kind, "beta_p": self.beta_p,
                "beta_y": self.beta_y.tolist(), "basis": self.basis.to_dict(),
                "beta_x": self.beta_x.tolist(), "covariates": list(self.covariates)}


# ---------------------------------------------------------------------------
# public helpers
# ---------------------------------------------------------------------------

def eval_choice_prob(model: ChoiceModel, j: int, point: BudgetPoint) -> float:
    """``q_j(p, y)`` at one budget point."""
    if not isinstance(j, (int, np.integer)) or not 0 <= j <= model.J:
        raise ModelError(f"alternative index must be in 0..{model.J}, got {j!r}")
    if point.J != model.J:
        raise ModelError(f"budget point has {point.J} prices, model has J={model.J}")
    return float(model.probs(point.p, point.income)[j])


def model_from_dict(d):
    if d.get("schema") != SCHEMA:
        raise ModelError(f"unsupported model schema {d.get('schema')!r}")
    kind = d.get("kind")
    support = d.get("income_support")
    if kind == "quasilinear":
        return QuasilinearModel([Offset.from_dict(o) for o in d["offsets"]],
                                covariates=d.get("covariates", ()), income_support=support)
    if kind == "synthetic":
        u, h = d["utilities"], d["heterogeneity"]
        return make_synthetic(
            UtilitySpec(tuple(float(v) for v in u["intercepts"]),
                        tuple(float(v) for v in u["money_slopes"]),
                        tuple(u["transforms"])),
            HeterogeneitySpec(h["shock"], float(h["shock_scale"]), float(h["money_mu"]),
                              float(h["money_sd"]), int(h.get("nodes", 48))),
            seed=int(d.get("seed", 0)), covariates=d.get("covariates", ()), income_support=support)
    if kind == "estimated_spline_probit":
        return EstimatedSplineProbit(d["beta_p"], d["beta_y"], SplineBasis.from_dict(d["basis"]),
                                     d.get("beta_x", ()), d.get("covariates", ()))
    raise ModelError(f"unknown model kind {kind!r}")


def model_from_json(text):
    return model_from_dict(json.loads(text))


def logit_model(alpha=0.0, beta=1.0):
    """Binary quasilinear logit, ``q_1 = Lambda(alpha - beta p)``."""
    return QuasilinearModel([Offset.logit(alpha, beta)])


def probit_model(mu=0.0, s=1.0):
    """Binary quasilinear probit, ``q_1 = Phi((mu - p) / s)``."""
    return QuasilinearModel([Offset("normal", mu, s)])
