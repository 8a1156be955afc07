"""Quadrature rules on the reference simplex.

Rules are conical (collapsed) products of Gauss-Jacobi rules, so every
weight is positive and any polynomial order is available in 2D and 3D.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights on the reference simplex.

    The reference simplex has vertices ``0, e_1, ..., e_N`` and volume
    ``1/N!``; the weights sum to that volume.
    """

    points: np.ndarray
    weights: np.ndarray
    order: int

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def barycentric(self) -> np.ndarray:
        """Barycentric coordinates of the points, shape ``(Q, N+1)``."""
        lam0 = 1.0 - self.points.sum(axis=1, keepdims=True)
        return np.hstack([lam0, self.points])


def _jacobi01(n: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    # Gauss-Jacobi on [0, 1] for the weight (1 - s)**alpha.
    x, w = roots_jacobi(n, alpha, 0.0)
    s = 0.5 * (1.0 + x)
    return s, w / 2.0 ** (alpha + 1.0)


@lru_cache(maxsize=None)
def simplex_rule(dim: int, order: int = 4) -> QuadratureRule:
    """Return a positive-weight rule exact for polynomials of degree ``order``.

    Parameters
    ----------
    dim : int
        Simplex dimension, 2 (triangle) or 3 (tetrahedron).
    order : int
        Total polynomial degree integrated exactly.
    """
    if dim not in (2, 3):
        raise ValueError(f"unsupported simplex dimension {dim}")
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    n = max(1, math.ceil((order + 1) / 2))
    if dim == 2:
        s, ws = _jacobi01(n, 1.0)
        t, wt = _jacobi01(n, 0.0)
        S, T = np.meshgrid(s, t, indexing="ij")
        W = np.outer(ws, wt)
        pts = np.column_stack([S.ravel(), (T * (1.0 - S)).ravel()])
    else:
        s, ws = _jacobi01(n, 2.0)
        t, wt = _jacobi01(n, 1.0)
        v, wv = _jacobi01(n, 0.0)
        S, T, V = np.meshgrid(s, t, v, indexing="ij")
        W = ws[:, None, None] * wt[None, :, None] * wv[None, None, :]
        pts = np.column_stack([
            S.ravel(),
            (T * (1.0 - S)).ravel(),
            (V * (1.0 - S) * (1.0 - T)).ravel(),
        ])
    return QuadratureRule(points=pts, weights=W.ravel(), order=order)
