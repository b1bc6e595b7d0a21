"""Bounds on the welfare CDF from finitely many observed demand points.

With ``q_0`` known only on a finite set ``S`` of price-income pairs, the value
``q_0(c - y + p, c)`` that pins down ``Pr[W <= c]`` is bracketed by
monotonicity of the outside-option share: it rises with inside prices and
with the outside option's residual income.  Observed entries that dominate
(or are dominated by) the target point in every coordinate give the bounds.
The bounds are valid; sharpness is not checked here.  Observed shares are
treated as exact: no allowance is made for sampling noise in ``q_0``.
"""
import csv
from dataclasses import dataclass

import numpy as np

from . import kernels
from .choice_model import BudgetPoint

SLACK = 1e-12


class DemandDataError(ValueError):
    """Malformed observed-demand input."""


@dataclass(frozen=True)
class ObservedDemandSet:
    """Observed ``(r, z, q_0(r, z))`` triples; ``r`` has shape ``(K, J)``."""

    prices: np.ndarray
    incomes: np.ndarray
    q0: np.ndarray

    def __post_init__(self):
        r = np.atleast_2d(np.asarray(self.prices, dtype=float))
        z = np.atleast_1d(np.asarray(self.incomes, dtype=float))
        q = np.atleast_1d(np.asarray(self.q0, dtype=float))
        if r.size == 0:
            r = r.reshape(0, r.shape[1] if r.ndim == 2 else 1)
        if not (r.shape[0] == z.size == q.size):
            raise DemandDataError("prices, incomes and q0 must have the same number of rows")
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(z)):
            raise DemandDataError("observed prices and incomes must be finite")
        if np.any((q < 0) | (q > 1)) or np.any(np.isnan(q)):
            raise DemandDataError("observed probabilities must lie in [0, 1]")
        keys = np.column_stack([r, z])
        if np.unique(keys, axis=0).shape[0] != keys.shape[0]:
            raise DemandDataError("observed (prices, income) entries must be distinct")
        object.__setattr__(self, "prices", r)
        object.__setattr__(self, "incomes", z)
        object.__setattr__(self, "q0", q)

    @classmethod
    def empty(cls, J=1):
        return cls(np.zeros((0, J)), np.zeros(0), np.zeros(0))

    @classmethod
    def from_model(cls, model, prices, incomes):
        """Exact ``q_0`` from ``model`` at the given rows."""
        r = np.atleast_2d(np.asarray(prices, dtype=float))
        z = np.atleast_1d(np.asarray(incomes, dtype=float))
        return cls(r, z, model.q0(r, z))

    @property
    def J(self):
        return self.prices.shape[1]

    def __len__(self):
        return self.incomes.size

    def subset(self, rows):
        rows = np.asarray(rows)
        return ObservedDemandSet(self.prices[rows], self.incomes[rows], self.q0[rows])

    def is_doubled_price(self, tol=1e-12):
        if self.J != 2:
            return False
        r = self.prices
        return bool(np.all(np.abs(r[:, 1] - 2.0 * r[:, 0]) <= tol * np.maximum(1.0, np.abs(r[:, 1]))))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"r_{j + 1}" for j in range(self.J)] + ["z", "q0"])
            for row, zi, qi in zip(self.prices, self.incomes, self.q0):
                w.writerow([format(v, ".17g") for v in (*row, zi, qi)])


def load_demand_csv(path, ordered=False) -> ObservedDemandSet:
    """Read ``r_1..r_J, z, q0`` columns; ``ordered`` enforces doubled prices."""
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    if not rows:
        raise DemandDataError(f"{path}: no header")
    header, body = rows[0], rows[1:]
    price_cols = [i for i, h in enumerate(header) if h.startswith("r_")]
    if not price_cols or "z" not in header or "q0" not in header:
        raise DemandDataError(f"{path}: expected columns r_1..r_J, z, q0")
    try:
        data = np.array([[float(row[i]) for i in range(len(header))] for row in body])
    except (ValueError, IndexError) as exc:
        raise DemandDataError(f"{path}: {exc}") from exc
    data = data.reshape(-1, len(header))
    S = ObservedDemandSet(data[:, price_cols], data[:, header.index("z")],
                          data[:, header.index("q0")])
    if ordered and len(S) and not S.is_doubled_price():
        raise DemandDataError(f"{path}: ordered bounds need price vectors (p, 2p)")
    return S


@dataclass(frozen=True)
class CdfBounds:
    lower: np.ndarray
    upper: np.ndarray
    has_lower: np.ndarray
    has_upper: np.ndarray

    def contains(self, values, tol=0.0):
        values = np.asarray(values, dtype=float)
        return (self.lower - tol <= values) & (values <= self.upper + tol)


def _scan(S, prices, y, c):
    c = np.atleast_1d(np.asarray(c, dtype=float))
    lo, hi, has_lo, has_hi = kernels.cdf_bounds_scan(S.prices, S.incomes, S.q0, prices, y, c, SLACK)
    below = c < y
    # W >= y, so the CDF is exactly zero below income
    lo = np.where(below, 0.0, lo)
    hi = np.where(below, 0.0, hi)
    return CdfBounds(lo, hi, has_lo & ~below, has_hi & ~below)


def multinomial_cdf_bounds(S: ObservedDemandSet, c, point: BudgetPoint) -> CdfBounds:
    """Lower/upper bounds on ``Pr[W(p, y) <= c]`` for each ``c``.

    Lower: largest observed ``q_0(r, z)`` with ``z - r_j >= y - p_j`` for all
    ``j`` and ``z <= c``.  Upper: smallest with the reversed inequalities and
    ``z >= c``.  Empty sets give 0 and 1 with ``has_lower``/``has_upper``
    False.
    """
    if len(S) and S.J != point.J:
        raise DemandDataError(f"observed set has J={S.J}, budget point has J={point.J}")
    return _scan(S, point.p, point.income, c)


def ordered_cdf_bounds(S: ObservedDemandSet, c, price, y) -> CdfBounds:
    """``L(c)`` and ``H(c)`` when the two inside options cost ``p`` and ``2p``."""
    if len(S) and not S.is_doubled_price():
        raise DemandDataError("ordered bounds need every observed price vector to be (p, 2p)")
    price = float(price)
    return _scan(S, np.array([price, 2.0 * price]), float(y), c)
