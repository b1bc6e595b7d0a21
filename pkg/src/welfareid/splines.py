"""Clamped B-spline bases on equally spaced knots."""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .kernels import bspline_basis


@dataclass(frozen=True)
class SplineBasis:
    """Degree-``degree`` B-splines with ``M + 1`` equally spaced breakpoints.

    Boundary knots are repeated so the basis is clamped; there are
    ``M + degree`` basis functions and they sum to one on ``[y_min, y_max]``.
    """

    y_min: float
    y_max: float
    M: int
    degree: int = 3

    def __post_init__(self):
        if not np.isfinite(self.y_min) or not np.isfinite(self.y_max) or self.y_max <= self.y_min:
            raise ValueError(f"degenerate spline interval [{self.y_min}, {self.y_max}]")
        if self.degree < 1:
            raise ValueError("spline degree must be at least 1")
        if self.M < 2:
            raise ValueError("need M >= 2 knot intervals")

    @property
    def size(self):
        return self.M + self.degree

    @cached_property
    def knots(self):
        q = self.degree
        breaks = np.linspace(self.y_min, self.y_max, self.M + 1)
        return np.concatenate([np.full(q, self.y_min), breaks, np.full(q, self.y_max)])

    def __call__(self, y):
        """Basis matrix, shape ``(len(y), M + degree)``; zero outside the support."""
        return bspline_basis(np.asarray(y, dtype=float).ravel(), self.knots, self.degree)

    @cached_property
    def derivative_matrix(self):
        """``D`` with ``d/dy (B(y) @ c) = B'(y) @ (D @ c)``.

        ``B'`` is the degree ``q - 1`` basis on the knot vector with one copy of
        each boundary knot dropped (de Boor's derivative formula).
        """
        q, t, n = self.degree, self.knots, self.size
        D = np.zeros((n - 1, n))
        for i in range(1, n):
            gap = t[i + q] - t[i]
            D[i - 1, i] = q / gap
            D[i - 1, i - 1] = -q / gap
        return D

    def derivative_basis(self, y):
        return bspline_basis(np.asarray(y, dtype=float).ravel(), self.knots[1:-1], self.degree - 1)

    def derivative(self, y, coef):
        return self.derivative_basis(y) @ (self.derivative_matrix @ np.asarray(coef, dtype=float))

    def evaluate(self, y, coef):
        return self(y) @ np.asarray(coef, dtype=float)

    def to_dict(self):
        return {"y_min": float(self.y_min), "y_max": float(self.y_max),
                "M": int(self.M), "degree": int(self.degree)}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["y_min"]), float(d["y_max"]), int(d["M"]), int(d["degree"]))


def build_spline_basis(y_min, y_max, M, q=3):
    if q not in (2, 3):
        raise ValueError("spline degree q must be 2 or 3")
    return SplineBasis(float(y_min), float(y_max), int(M), int(q))
