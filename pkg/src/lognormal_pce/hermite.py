"""Orthonormal probabilists' Hermite polynomials and Gauss-Hermite rules.

``H_k`` is normalized in ``L2(R, g)`` with ``g`` the standard Gaussian
density, so ``H_k = He_k / sqrt(k!)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .multiindex import MultiIndex

MAX_DEGREE = 64


@dataclass(frozen=True)
class QuadratureRule1D:
    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


def _check_degree(k: int):
    if k < 0:
        raise ValueError("degree must be nonnegative")
    if k > MAX_DEGREE:
        raise ValueError(f"degree {k} exceeds the supported maximum {MAX_DEGREE}")


def hermite_table(kmax: int, t) -> np.ndarray:
    """Values ``H_0(t), ..., H_kmax(t)`` stacked along a new leading axis."""
    _check_degree(kmax)
    t = np.asarray(t, dtype=float)
    out = np.empty((kmax + 1,) + t.shape)
    out[0] = 1.0
    if kmax >= 1:
        out[1] = t
    for k in range(1, kmax):
        out[k + 1] = (t * out[k] - np.sqrt(k) * out[k - 1]) / np.sqrt(k + 1)
    return out


def hermite_eval(k: int, t):
    """Orthonormal Hermite polynomial ``H_k(t)``; scalar in, scalar out."""
    vals = hermite_table(k, t)[k]
    return float(vals) if np.ndim(vals) == 0 else vals


def monic_hermite(k: int, t):
    """``He_k(t)`` from ``He_{n+1} = t He_n - n He_{n-1}``."""
    t = np.asarray(t, dtype=float)
    prev, cur = np.zeros_like(t), np.ones_like(t)
    for n in range(k):
        prev, cur = cur, t * cur - n * prev
    return cur


@lru_cache(maxsize=None)
def _gauss_hermite(order: int):
    if order == 1:
        return np.zeros(1), np.ones(1)
    off = np.sqrt(np.arange(1, order, dtype=float))
    nodes, vecs = eigh_tridiagonal(np.zeros(order), off)
    weights = vecs[0] ** 2
    # enforce the exact symmetry of the rule
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    weights = weights / weights.sum()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_hermite(order: int) -> QuadratureRule1D:
    """Gauss rule for the standard Gaussian density (Golub-Welsch).

    Exact for polynomials of degree ``<= 2*order - 1``; weights sum to one.
    """
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    nodes, weights = _gauss_hermite(int(order))
    return QuadratureRule1D(nodes, weights, int(order))


def tensor_hermite_eval(nu: MultiIndex, y) -> float:
    """``H_nu(y) = prod_j H_{nu_j}(y_j)``.

    ``y`` is either a mapping from coordinate to value or a sequence whose
    position 0 holds ``y_1``.
    """
    value = 1.0
    for j, d in nu.entries:
        try:
            yj = y[j] if isinstance(y, dict) else y[j - 1]
        except (KeyError, IndexError):
            raise KeyError(f"no value for coordinate y_{j}") from None
        value *= hermite_eval(d, float(yj))
    return value
