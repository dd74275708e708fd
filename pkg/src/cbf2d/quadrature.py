"""Fixed quadrature rules on the reference triangle and the unit interval.

Triangle rules are collapsed Gauss-Legendre x Gauss-Jacobi tensor rules on
the reference triangle with vertices (0,0), (1,0), (0,1).  All weights are
positive and the rule of requested degree integrates every bivariate
polynomial of that total degree exactly.  Edge rules are plain
Gauss-Legendre on [0, 1].
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

TRIANGLE_MAX_DEGREE = 14
EDGE_MAX_DEGREE = 30


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # (nq, 2) for triangles, (nq,) for edges
    weights: np.ndarray  # (nq,), positive; sums to 1/2 (triangle) or 1 (edge)
    degree: int

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Rule on the reference triangle, exact for total degree <= ``degree``."""
    if not 1 <= degree <= TRIANGLE_MAX_DEGREE:
        raise ValueError(f"unsupported triangle quadrature degree {degree}")
    n = (degree + 2) // 2  # Gauss with n points is exact to degree 2n-1
    xa, wa = np.polynomial.legendre.leggauss(n)
    xb, wb = roots_jacobi(n, 1.0, 0.0)
    a, b = np.meshgrid(xa, xb, indexing="ij")
    wgt = np.outer(wa, wb)
    # Duffy map: the Jacobi weight (1-b) absorbs the collapsing Jacobian.
    eta = 0.5 * (1.0 + b)
    xi = 0.5 * (1.0 + a) * (1.0 - eta)
    pts = np.column_stack([xi.ravel(), eta.ravel()])
    return QuadratureRule(pts, wgt.ravel() / 8.0, degree)


@lru_cache(maxsize=None)
def edge_rule(degree: int) -> QuadratureRule:
    """Gauss rule on [0, 1], exact for polynomial degree <= ``degree``."""
    if not 1 <= degree <= EDGE_MAX_DEGREE:
        raise ValueError(f"unsupported edge quadrature degree {degree}")
    n = (degree + 2) // 2
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(0.5 * (x + 1.0), 0.5 * w, degree)
