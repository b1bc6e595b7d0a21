"""Composite Gauss-Legendre quadrature on ``[0, upper]``, vectorised over integrands.

Integrands here are welfare integrands in ``z`` (money units) that decay
towards the truncation point.  Each segment is integrated in a log-graded
variable, ``z = a + s * (exp(u) - 1)``, so that panels are fine near the
segment start and coarse in the tail.  Panels double until the relative
change falls under ``rtol``.
"""
import logging
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

log = logging.getLogger(__name__)

GL_ORDER = 8
_GL_X, _GL_W = leggauss(GL_ORDER)


class QuadratureError(ArithmeticError):
    """Quadrature failed to converge or the truncated tail is too heavy."""


@dataclass(frozen=True)
class QuadratureConfig:
    panels: int = 64
    rtol: float = 1e-8
    atol: float = 1e-13
    max_evals: int = 2 ** 14
    # auto truncation: integrand * z must fall below this at the cut
    tail_tol: float = 1e-11
    # hard-fail threshold for an externally imposed truncation point
    support_tail_tol: float = 1e-4
    max_zmax_scale: float = 1e9


DEFAULT = QuadratureConfig()


def _panel_nodes(panels):
    """Nodes/weights of a ``panels``-panel composite rule on ``[0, 1]``."""
    edges = np.linspace(0.0, 1.0, panels + 1)
    h = np.diff(edges)
    x = (edges[:-1, None] + 0.5 * h[:, None] * (_GL_X[None, :] + 1.0)).ravel()
    w = (0.5 * h[:, None] * _GL_W[None, :]).ravel()
    return x, w


def _segment_rule(a, b, scale, panels):
    """Nodes ``(E, N)`` and weights ``(E, N)`` for per-element segments ``[a, b]``."""
    u, wu = _panel_nodes(panels)
    length = np.maximum(b - a, 0.0)
    big_l = np.log1p(length / scale)  # u-range is [0, big_l]
    uu = big_l[:, None] * u[None, :]
    expu = np.exp(uu)
    z = a[:, None] + scale[:, None] * (expu - 1.0)
    dz = scale[:, None] * expu * big_l[:, None]
    return z, dz * wu[None, :]


def integrate(f, upper, scale=1.0, breaks=None, config=DEFAULT, panels=None):
    """Integrate ``f`` over ``[0, upper]`` element-wise.

    Parameters
    ----------
    f : callable
        Maps ``z`` of shape ``(E, N)`` to values of the same shape.  Row ``e``
        belongs to integrand ``e``.
    upper : array_like
        Upper limits, shape ``(E,)``.
    scale : array_like
        Money scale of each integrand; sets the grading of the panels.
    breaks : array_like, optional
        ``(E, K)`` points where an integrand jumps.  Segments are split there.
    panels : int, optional
        Fixed panel count (no adaptivity).  Used by optimisers that need the
        same rule on every call.

    Returns
    -------
    values : ndarray, shape ``(E,)``
    """
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    E = upper.size
    scale = np.broadcast_to(np.asarray(scale, dtype=float), (E,)).copy()
    scale = np.where(scale > 0, scale, 1.0)
    if breaks is None:
        edges = np.column_stack([np.zeros(E), upper])
    else:
        br = np.atleast_2d(np.asarray(breaks, dtype=float)).reshape(E, -1)
        br = np.clip(np.nan_to_num(br, nan=0.0), 0.0, upper[:, None])
        edges = np.column_stack([np.zeros(E), np.sort(br, axis=1), upper])

    def rule(p):
        total = np.zeros(E)
        for k in range(edges.shape[1] - 1):
            z, w = _segment_rule(edges[:, k], edges[:, k + 1], scale, p)
            total += np.sum(f(z) * w, axis=1)
        return total

    if panels is not None:
        return rule(int(panels))

    p = config.panels
    prev = rule(p)
    while True:
        p *= 2
        if p * GL_ORDER > config.max_evals:
            raise QuadratureError(
                f"no convergence within {config.max_evals} evaluations per segment")
        cur = rule(p)
        err = np.abs(cur - prev)
        if np.all(err <= config.rtol * np.abs(cur) + config.atol * np.maximum(1.0, scale)):
            return cur
        prev = cur


def auto_upper(f, scale, config=DEFAULT):
    """Per-element truncation point where the integrand has died out.

    Doubles ``z`` from ``scale`` until ``|f(z)| * max(z, scale)`` is below
    ``config.tail_tol`` at two consecutive probes.
    """
    scale = np.atleast_1d(np.asarray(scale, dtype=float))
    E = scale.size
    z = scale.copy()
    done = np.zeros(E, dtype=bool)
    streak = np.zeros(E, dtype=int)
    zmax = np.full(E, np.nan)
    while not done.all():
        val = np.abs(f(z[:, None]))[:, 0]
        small = val * np.maximum(z, scale) <= config.tail_tol
        streak = np.where(small, streak + 1, 0)
        newly = (~done) & (streak >= 2)
        zmax[newly] = z[newly]
        done |= newly
        if np.any(z[~done] > config.max_zmax_scale * scale[~done]):
            raise QuadratureError("integrand does not decay; welfare integral may diverge")
        z = np.where(done, z, 2.0 * z)
    return zmax


def check_tail(f, upper, config=DEFAULT):
    """Integrand magnitude at an imposed truncation point; raises if too large."""
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    tail = np.abs(f(upper[:, None]))[:, 0]
    worst = float(np.max(tail)) if tail.size else 0.0
    log.debug("tail integrand at truncation: %.3g", worst)
    if worst > config.support_tail_tol:
        raise QuadratureError(
            f"integrand at truncation point is {worst:.3g} > {config.support_tail_tol:g}")
    return tail
