"""Hot numeric kernels.

Every kernel exists twice: a loop version compiled with numba and a
vectorised numpy version.  The public dispatcher picks one according to
:data:`welfareid._accel.USE_NUMBA`; both are importable directly so tests and
``benchmarks/bench_kernels.py`` can compare them.

Utility transforms are encoded as small integers so they can cross the numba
boundary:

* ``LINEAR`` (0): ``phi(n) = n``
* ``LOG1P`` (1): ``phi(n) = log(1 + n)`` for ``n >= 0`` and ``n`` below zero,
  which is C1, strictly increasing and unbounded in both directions.
"""
import math

import numpy as np

from . import _accel
from ._accel import njit

LINEAR = 0
LOG1P = 1

LOGIT = 0
PROBIT = 1

_SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# scalar helpers
# ---------------------------------------------------------------------------

@njit
def _phi(kind, n):
    if kind == LOG1P and n > 0.0:
        return math.log1p(n)
    return n


@njit
def _utility(intercept, slope, kind, n):
    if n == -np.inf:
        return -np.inf
    return intercept + slope * _phi(kind, n)


def phi(kind, n):
    """Vectorised numeraire transform."""
    n = np.asarray(n, dtype=float)
    if kind == LOG1P:
        return np.where(n > 0.0, np.log1p(np.maximum(n, 0.0)), n)
    return n


def phi_inverse(kind, u):
    u = np.asarray(u, dtype=float)
    if kind == LOG1P:
        return np.where(u > 0.0, np.expm1(np.maximum(u, 0.0)), u)
    return u


def _utility_np(intercept, slope, kind, n):
    n = np.asarray(n, dtype=float)
    with np.errstate(invalid="ignore"):
        out = intercept + slope * phi(kind, n)
    return np.where(np.isneginf(n), -np.inf, out)


# ---------------------------------------------------------------------------
# choice probabilities of the synthetic family
# ---------------------------------------------------------------------------

@njit
def _choice_probs_numba(prices, incomes, a, m, kinds, b_nodes, b_weights, shock, scale):
    P, J = prices.shape
    K = b_nodes.shape[0]
    out = np.zeros((P, J + 1))
    v = np.empty(J + 1)
    for i in range(P):
        y = incomes[i]
        for k in range(K):
            b = b_nodes[k]
            v[0] = _utility(a[0], b * m[0], kinds[0], y)
            for j in range(J):
                v[j + 1] = _utility(a[j + 1], b * m[j + 1], kinds[j + 1], y - prices[i, j])
            if shock == PROBIT:
                d = (v[1] - v[0]) / scale
                p1 = 0.5 * math.erfc(-d / _SQRT2)
                out[i, 1] += b_weights[k] * p1
                out[i, 0] += b_weights[k] * (1.0 - p1)
            else:
                vmax = v[0]
                for j in range(1, J + 1):
                    if v[j] > vmax:
                        vmax = v[j]
                tot = 0.0
                for j in range(J + 1):
                    v[j] = math.exp((v[j] - vmax) / scale)
                    tot += v[j]
                for j in range(J + 1):
                    out[i, j] += b_weights[k] * v[j] / tot
    return out


def _choice_probs_numpy(prices, incomes, a, m, kinds, b_nodes, b_weights, shock, scale):
    P, J = prices.shape
    n = np.concatenate([incomes[:, None], incomes[:, None] - prices], axis=1)  # (P, J+1)
    v = np.empty((P, b_nodes.size, J + 1))
    for j in range(J + 1):
        v[:, :, j] = _utility_np(a[j], b_nodes[None, :] * m[j], kinds[j], n[:, j:j + 1])
    if shock == PROBIT:
        from scipy.special import ndtr
        p1 = ndtr((v[:, :, 1] - v[:, :, 0]) / scale)
        p1 = p1 @ b_weights
        return np.column_stack([1.0 - p1, p1])
    v = (v - v.max(axis=2, keepdims=True)) / scale
    e = np.exp(v)
    e /= e.sum(axis=2, keepdims=True)
    return np.einsum("pkj,k->pj", e, b_weights)


def choice_probs(prices, incomes, a, m, kinds, b_nodes, b_weights, shock, scale):
    """Choice probabilities of the synthetic random-utility family.

    Utility of alternative ``j`` at numeraire ``n`` is
    ``a[j] + eps[j] + b * m[j] * phi_j(n)``; ``b`` is integrated out with the
    supplied quadrature nodes, ``eps`` analytically (i.i.d. Gumbel for
    ``LOGIT``, a single normal shock on alternative 1 for ``PROBIT``).

    Returns an array of shape ``(P, J + 1)``.
    """
    args = (
        np.ascontiguousarray(prices, dtype=float),
        np.ascontiguousarray(incomes, dtype=float),
        np.ascontiguousarray(a, dtype=float),
        np.ascontiguousarray(m, dtype=float),
        np.ascontiguousarray(kinds, dtype=np.int64),
        np.ascontiguousarray(b_nodes, dtype=float),
        np.ascontiguousarray(b_weights, dtype=float),
        int(shock),
        float(scale),
    )
    if _accel.USE_NUMBA:
        return _choice_probs_numba(*args)
    return _choice_probs_numpy(*args)


# ---------------------------------------------------------------------------
# agent-level indirect utility (normalised, money units)
# ---------------------------------------------------------------------------

@njit
def _invert_u0(target, intercept, slope, kind, lo, width, tol):
    """Smallest x >= lo (to ``tol``) with U0(x) >= target; U0(lo) < target assumed."""
    hi = lo + width
    k = 0
    while _utility(intercept, slope, kind, hi) < target:
        width *= 2.0
        hi = lo + width
        k += 1
        if k > 60:
            return np.nan
    for _ in range(400):
        if hi - lo <= tol * max(1.0, abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if _utility(intercept, slope, kind, mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@njit
def _agent_welfare(ic, sl, kinds, prices, y, width, tol):
    """(W, chosen alternative) for one agent; ic/sl are length J+1 rows."""
    J = prices.shape[0]
    u0 = _utility(ic[0], sl[0], kinds[0], y)
    best = 0
    ubest = u0
    for j in range(J):
        uj = _utility(ic[j + 1], sl[j + 1], kinds[j + 1], y - prices[j])
        if uj > ubest:
            ubest = uj
            best = j + 1
    if best == 0:
        return y, 0
    return _invert_u0(ubest, ic[0], sl[0], kinds[0], y, width, tol), best


@njit
def _welfare_numba(intercepts, slopes, kinds, prices, y, width, tol):
    N = intercepts.shape[0]
    w = np.empty(N)
    choice = np.empty(N, dtype=np.int64)
    for i in range(N):
        w[i], choice[i] = _agent_welfare(intercepts[i], slopes[i], kinds, prices, y, width, tol)
    return w, choice


def _bisect_u0_numpy(target, ic0, sl0, kind0, lo, width, tol):
    """Vectorised counterpart of ``_invert_u0``."""
    lo = np.array(lo, dtype=float)
    width = np.full_like(target, float(width))
    hi = lo + width
    for _ in range(61):
        short = _utility_np(ic0, sl0, kind0, hi) < target
        if not short.any():
            break
        width = np.where(short, 2.0 * width, width)
        hi = np.where(short, lo + width, hi)
    else:
        short = _utility_np(ic0, sl0, kind0, hi) < target
        hi = np.where(short, np.nan, hi)
    for _ in range(400):
        if np.all(hi - lo <= tol * np.maximum(1.0, np.abs(hi))) or np.isnan(hi).all():
            break
        mid = 0.5 * (lo + hi)
        below = _utility_np(ic0, sl0, kind0, mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def _welfare_numpy(intercepts, slopes, kinds, prices, y, width, tol):
    N, J1 = intercepts.shape
    n = np.concatenate([[y], y - prices])
    u = np.empty((N, J1))
    for j in range(J1):
        u[:, j] = _utility_np(intercepts[:, j], slopes[:, j], kinds[j], n[j])
    choice = np.argmax(u, axis=1)
    # strict preference for the inside option; ties go to the outside good
    choice = np.where(u[np.arange(N), choice] > u[:, 0], choice, 0)
    w = np.full(N, float(y))
    buy = choice > 0
    if buy.any():
        target = u[buy, choice[buy]]
        w[buy] = _bisect_u0_numpy(target, intercepts[buy, 0], slopes[buy, 0], kinds[0],
                                  np.full(target.size, float(y)), width, tol)
    return w, choice.astype(np.int64)


def agent_welfare(intercepts, slopes, kinds, prices, y, width=10.0, tol=1e-12):
    """Normalised indirect utility of each simulated agent.

    ``W = max{y, U0^{-1}(U_j(y - p_j))}``, with ``U0^{-1}`` computed by
    bisection.  Infinite prices remove an alternative.  Returns ``(W, choice)``.
    """
    args = (
        np.ascontiguousarray(intercepts, dtype=float),
        np.ascontiguousarray(slopes, dtype=float),
        np.ascontiguousarray(kinds, dtype=np.int64),
        np.ascontiguousarray(prices, dtype=float),
        float(y), float(width), float(tol),
    )
    if _accel.USE_NUMBA:
        return _welfare_numba(*args)
    return _welfare_numpy(*args)


@njit
def _cv_numba(intercepts, slopes, kinds, p_from, p_to, y, width, tol):
    N = intercepts.shape[0]
    out = np.empty(N)
    for i in range(N):
        ic = intercepts[i]
        sl = slopes[i]
        target, _ = _agent_welfare(ic, sl, kinds, p_from, y, width, tol)
        # W(p_to, x) >= x, so x* <= target
        hi = target
        step = width
        lo = target - step
        k = 0
        while True:
            wlo, _ = _agent_welfare(ic, sl, kinds, p_to, lo, width, tol)
            if wlo <= target:
                break
            step *= 2.0
            lo = target - step
            k += 1
            if k > 60:
                lo = np.nan
                break
        if lo != lo:
            out[i] = np.nan
            continue
        for _ in range(400):
            if hi - lo <= tol * max(1.0, abs(hi)):
                break
            mid = 0.5 * (lo + hi)
            wm, _ = _agent_welfare(ic, sl, kinds, p_to, mid, width, tol)
            if wm < target:
                lo = mid
            else:
                hi = mid
        out[i] = 0.5 * (lo + hi) - y
    return out


def _cv_numpy(intercepts, slopes, kinds, p_from, p_to, y, width, tol):
    target, _ = _welfare_numpy(intercepts, slopes, kinds, p_from, y, width, tol)

    def w_at(x):
        # income varies per agent: evaluate column-wise
        N, J1 = intercepts.shape
        u = np.empty((N, J1))
        u[:, 0] = _utility_np(intercepts[:, 0], slopes[:, 0], kinds[0], x)
        for j in range(1, J1):
            u[:, j] = _utility_np(intercepts[:, j], slopes[:, j], kinds[j], x - p_to[j - 1])
        best = np.argmax(u, axis=1)
        ub = u[np.arange(N), best]
        out = np.array(x, dtype=float, copy=True)
        buy = (best > 0) & (ub > u[:, 0])
        if buy.any():
            out[buy] = _bisect_u0_numpy(ub[buy], intercepts[buy, 0], slopes[buy, 0], kinds[0],
                                        x[buy], width, tol)
        return out

    hi = target.copy()
    step = np.full_like(target, float(width))
    lo = target - step
    for _ in range(61):
        # NaN (overflowed inversion) counts as still above target, as in the numba loop
        over = ~(w_at(lo) <= target)
        if not over.any():
            break
        step = np.where(over, 2.0 * step, step)
        lo = np.where(over, target - step, lo)
    for _ in range(400):
        if np.all(hi - lo <= tol * np.maximum(1.0, np.abs(hi))):
            break
        mid = 0.5 * (lo + hi)
        below = w_at(mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi) - y


def agent_cv(intercepts, slopes, kinds, p_from, p_to, y, width=10.0, tol=1e-12):
    """Compensating variation per agent: solves ``W(p_to, y + CV) = W(p_from, y)``."""
    args = (
        np.ascontiguousarray(intercepts, dtype=float),
        np.ascontiguousarray(slopes, dtype=float),
        np.ascontiguousarray(kinds, dtype=np.int64),
        np.ascontiguousarray(p_from, dtype=float),
        np.ascontiguousarray(p_to, dtype=float),
        float(y), float(width), float(tol),
    )
    if _accel.USE_NUMBA:
        return _cv_numba(*args)
    return _cv_numpy(*args)


# ---------------------------------------------------------------------------
# partial-identification scans
# ---------------------------------------------------------------------------

@njit
def _bounds_numba(r, z, q0, prices, y, c, slack):
    S, J = r.shape
    C = c.shape[0]
    lower = np.zeros(C)
    upper = np.ones(C)
    has_lower = np.zeros(C, dtype=np.bool_)
    has_upper = np.zeros(C, dtype=np.bool_)
    for s in range(S):
        dominates = True   # z - r_j >= y - p_j for all j
        dominated = True   # z - r_j <= y - p_j for all j
        for j in range(J):
            d = (z[s] - r[s, j]) - (y - prices[j])
            if d < -slack:
                dominates = False
            if d > slack:
                dominated = False
        if not (dominates or dominated):
            continue
        for i in range(C):
            if dominates and z[s] <= c[i] + slack:
                if not has_lower[i] or q0[s] > lower[i]:
                    lower[i] = q0[s]
                    has_lower[i] = True
            if dominated and z[s] >= c[i] - slack:
                if not has_upper[i] or q0[s] < upper[i]:
                    upper[i] = q0[s]
                    has_upper[i] = True
    return lower, upper, has_lower, has_upper


def _bounds_numpy(r, z, q0, prices, y, c, slack):
    d = (z[:, None] - r) - (y - prices)[None, :]
    dominates = np.all(d >= -slack, axis=1)
    dominated = np.all(d <= slack, axis=1)
    lo_ok = dominates[None, :] & (z[None, :] <= c[:, None] + slack)
    hi_ok = dominated[None, :] & (z[None, :] >= c[:, None] - slack)
    lower = np.where(lo_ok, q0[None, :], -np.inf).max(axis=1, initial=-np.inf)
    upper = np.where(hi_ok, q0[None, :], np.inf).min(axis=1, initial=np.inf)
    has_lower = np.isfinite(lower)
    has_upper = np.isfinite(upper)
    return np.where(has_lower, lower, 0.0), np.where(has_upper, upper, 1.0), has_lower, has_upper


def cdf_bounds_scan(r, z, q0, prices, y, c, slack=1e-12):
    """Order-statistic bounds on ``q0(c - y + p, c)`` from observed demand.

    Returns ``(lower, upper, has_lower, has_upper)``, each of length ``len(c)``;
    empty feasible sets give 0 / 1 with the matching ``has_*`` flag False.
    """
    r = np.ascontiguousarray(np.atleast_2d(r), dtype=float)
    if r.shape[0] == 0:
        c = np.atleast_1d(np.asarray(c, dtype=float))
        n = c.size
        return np.zeros(n), np.ones(n), np.zeros(n, bool), np.zeros(n, bool)
    args = (
        r,
        np.ascontiguousarray(z, dtype=float),
        np.ascontiguousarray(q0, dtype=float),
        np.ascontiguousarray(prices, dtype=float),
        float(y),
        np.ascontiguousarray(np.atleast_1d(c), dtype=float),
        float(slack),
    )
    if _accel.USE_NUMBA:
        return _bounds_numba(*args)
    return _bounds_numpy(*args)


# ---------------------------------------------------------------------------
# B-spline basis (Cox-de Boor)
# ---------------------------------------------------------------------------

@njit
def _bspline_numba(x, t, degree):
    n_basis = t.shape[0] - degree - 1
    N = x.shape[0]
    out = np.zeros((N, n_basis))
    left = np.empty(degree + 1)
    right = np.empty(degree + 1)
    vals = np.empty(degree + 1)
    lo_t = t[degree]
    hi_t = t[n_basis]
    for i in range(N):
        xi = x[i]
        if xi < lo_t or xi > hi_t:
            continue
        # knot span: t[mu] <= xi < t[mu+1], closing the last span on the right
        mu = degree
        while mu < n_basis - 1 and t[mu + 1] <= xi:
            mu += 1
        vals[0] = 1.0
        for k in range(1, degree + 1):
            left[k] = xi - t[mu + 1 - k]
            right[k] = t[mu + k] - xi
            saved = 0.0
            for r in range(k):
                temp = vals[r] / (right[r + 1] + left[k - r])
                vals[r] = saved + right[r + 1] * temp
                saved = left[k - r] * temp
            vals[k] = saved
        for r in range(degree + 1):
            out[i, mu - degree + r] = vals[r]
    return out


def _bspline_numpy(x, t, degree):
    n_basis = t.size - degree - 1
    lo_t, hi_t = t[degree], t[n_basis]
    inside = (x >= lo_t) & (x <= hi_t)
    # degree-0 indicators on the spans that carry support
    b = np.zeros((x.size, t.size - 1))
    mu = np.clip(np.searchsorted(t, x, side="right") - 1, degree, n_basis - 1)
    b[np.arange(x.size)[inside], mu[inside]] = 1.0
    for k in range(1, degree + 1):
        nk = t.size - k - 1
        denom1 = t[k:k + nk] - t[:nk]
        denom2 = t[k + 1:k + 1 + nk] - t[1:1 + nk]
        with np.errstate(divide="ignore", invalid="ignore"):
            w1 = np.where(denom1 > 0, (x[:, None] - t[None, :nk]) / denom1, 0.0)
            w2 = np.where(denom2 > 0, (t[None, k + 1:k + 1 + nk] - x[:, None]) / denom2, 0.0)
        b = w1 * b[:, :nk] + w2 * b[:, 1:nk + 1]
    return b[:, :n_basis]


def bspline_basis(x, knots, degree):
    """Evaluate all B-splines of ``degree`` on the full knot vector at ``x``.

    Points outside ``[knots[degree], knots[-degree-1]]`` get an all-zero row.
    """
    x = np.ascontiguousarray(np.atleast_1d(x), dtype=float)
    t = np.ascontiguousarray(knots, dtype=float)
    if _accel.USE_NUMBA:
        return _bspline_numba(x, t, int(degree))
    return _bspline_numpy(x, t, int(degree))


NUMBA_KERNELS = {
    "choice_probs": _choice_probs_numba,
    "agent_welfare": _welfare_numba,
    "agent_cv": _cv_numba,
    "cdf_bounds_scan": _bounds_numba,
    "bspline_basis": _bspline_numba,
}

NUMPY_KERNELS = {
    "choice_probs": _choice_probs_numpy,
    "agent_welfare": _welfare_numpy,
    "agent_cv": _cv_numpy,
    "cdf_bounds_scan": _bounds_numpy,
    "bspline_basis": _bspline_numpy,
}
