"""Positive-weight quadrature on the reference simplex.

Rules are Stroud conical products of Gauss-Jacobi rules (collapsed
coordinates), which have strictly positive weights and interior points for
every degree.  Degree 1 uses the centroid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 8


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Points in barycentric coordinates with weights on the reference simplex.

    The weights sum to the reference volume ``1/dim!``.
    """

    dim: int
    points: np.ndarray  # (nq, dim+1) barycentric
    weights: np.ndarray  # (nq,)
    degree: int

    @property
    def npoints(self) -> int:
        return len(self.weights)

    @property
    def reference_points(self) -> np.ndarray:
        """Cartesian coordinates on the simplex with vertices 0, e_1, ..., e_d."""
        return self.points[:, 1:]


def _conical(dim, n):
    # x_1 = t_1, x_2 = (1-t_1) t_2, ...; Jacobi weight (1-t)^(dim-1-k) on axis k
    nodes, weights = [], []
    for k in range(dim):
        a = dim - 1 - k
        t, w = roots_jacobi(n, a, 0)
        nodes.append(0.5 * (t + 1.0))
        weights.append(w / 2.0 ** (a + 1))
    T = np.stack(np.meshgrid(*nodes, indexing="ij"), axis=-1).reshape(-1, dim)
    W = np.prod(np.stack(np.meshgrid(*weights, indexing="ij"), axis=-1).reshape(-1, dim), axis=1)
    X = np.empty_like(T)
    scale = np.ones(len(T))
    for k in range(dim):
        X[:, k] = scale * T[:, k]
        scale = scale * (1.0 - T[:, k])
    return X, W


@lru_cache(maxsize=None)
def quadrature_rule(dim: int, degree: int) -> QuadratureRule:
    """Rule on the reference ``dim``-simplex exact for polynomials of ``degree``.

    Raises
    ------
    ValueError
        For ``degree < 1`` or ``degree > 8``.
    """
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    if degree < 1:
        raise ValueError("quadrature degree must be >= 1")
    if degree > MAX_DEGREE:
        raise ValueError(f"quadrature degree {degree} unsupported (max {MAX_DEGREE})")
    if degree == 1:
        X = np.full((1, dim), 1.0 / (dim + 1))
        W = np.array([1.0 / math.factorial(dim)])
    else:
        X, W = _conical(dim, (degree + 2) // 2)
    bary = np.concatenate([1.0 - X.sum(axis=1, keepdims=True), X], axis=1)
    bary.setflags(write=False)
    W.setflags(write=False)
    return QuadratureRule(dim, bary, W, degree)


def monomial_integral(exponents) -> float:
    """Exact integral of ``prod x_i**a_i`` over the reference simplex."""
    exponents = [int(a) for a in exponents]
    num = math.prod(math.factorial(a) for a in exponents)
    return num / math.factorial(sum(exponents) + len(exponents))
