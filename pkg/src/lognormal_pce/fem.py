"""P1 finite elements for ``-(a u')' = f`` on (0, 1) with ``u(0) = u(1) = 0``.

Element ``e = 0..m`` spans ``[x_e, x_{e+1}]`` with ``x_i = i h``, ``h = 1/(m+1)``.
Coefficients enter through their values at the element midpoints, and the
load uses the midpoint rule.  All solvers are batched: leading axes of the
coefficient arrays index independent samples.

Parametric derivatives are computed as the scaled quantities
``w_mu = d^mu u / mu!``, for which the recursion reads

    A(y) w_mu = D^T [ sum_{nu < mu} (psi^(mu-nu) / (mu-nu)!) a(y) grad w_nu ]

with ``A(y)`` the stiffness matrix of ``a(y)`` and ``D^T`` the discrete
divergence.  One factorization of ``A(y)`` serves every ``mu``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .field import FieldSample, FunctionSystem
from .multiindex import MultiIndex, WeightSequence


@dataclass(frozen=True)
class Mesh1D:
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("mesh needs at least one interior node")

    @property
    def h(self) -> float:
        return 1.0 / (self.m + 1)

    @property
    def nodes(self) -> np.ndarray:
        """Interior nodes ``x_1..x_m``."""
        return np.arange(1, self.m + 1) * self.h

    @property
    def all_nodes(self) -> np.ndarray:
        return np.arange(self.m + 2) * self.h

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.m + 1) + 0.5) * self.h

    @property
    def sup_points(self) -> np.ndarray:
        """Midpoints plus all nodes, the grid used for ``||b||_inf``."""
        return np.sort(np.concatenate([self.all_nodes, self.midpoints]))


@dataclass
class FemSolution:
    coeffs: np.ndarray
    mesh: Mesh1D

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.mesh.m,):
            raise ValueError(f"expected {self.mesh.m} nodal values, got shape {self.coeffs.shape}")

    def gradient(self) -> np.ndarray:
        return gradients(self.coeffs, self.mesh.h)

    def __call__(self, x):
        return np.interp(x, self.mesh.all_nodes, np.concatenate([[0.0], self.coeffs, [0.0]]))


class SolverError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# sources


def make_source(spec) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized right-hand side from a number or ``{"kind": ..., ...}`` dict.

    Kinds: ``constant`` (``value``) and ``manufactured_sine`` (``pi**2 sin(pi x)``,
    whose solution for ``a = 1`` is ``sin(pi x)``).
    """
    if isinstance(spec, (int, float)):
        spec = {"kind": "constant", "value": float(spec)}
    kind = spec.get("kind")
    if kind == "constant":
        value = float(spec.get("value", 1.0))
        return lambda x: np.full(np.shape(x), value)
    if kind == "manufactured_sine":
        return lambda x: math.pi**2 * np.sin(math.pi * np.asarray(x))
    raise ValueError(f"unknown source kind {kind!r}")


def load_vector(mesh: Mesh1D, f_at) -> np.ndarray:
    fm = np.asarray(f_at(mesh.midpoints), dtype=float) * (0.5 * mesh.h)
    return fm[:-1] + fm[1:]


# --------------------------------------------------------------------------
# linear algebra


def gradients(U: np.ndarray, h: float) -> np.ndarray:
    """Elementwise derivatives of P1 functions with nodal values ``U[..., :]``."""
    pad = [(0, 0)] * (U.ndim - 1) + [(1, 1)]
    return np.diff(np.pad(U, pad), axis=-1) / h


def divergence(F: np.ndarray) -> np.ndarray:
    """``v -> -int F v'`` as a nodal vector: ``F_{k+1} - F_k``."""
    return np.diff(F, axis=-1)


class TridiagonalFactor:
    """Thomas factorization of the P1 stiffness matrix for midpoint values ``a_mid``.

    ``a_mid`` has shape ``(..., m+1)``; each leading index is its own system.
    """

    def __init__(self, a_mid: np.ndarray, h: float):
        a_mid = np.asarray(a_mid, dtype=float)
        if not np.all(a_mid > 0):
            raise SolverError("diffusion coefficient must be positive at every quadrature point")
        self.batch_shape = a_mid.shape[:-1]
        m = a_mid.shape[-1] - 1
        # rows are the node index, batch flattened behind it
        a = a_mid.reshape(-1, m + 1).T / h
        diag = a[:-1] + a[1:]
        off = -a[1:-1]
        denom = np.empty_like(diag)
        cprime = np.empty_like(off)
        denom[0] = diag[0]
        for i in range(m - 1):
            cprime[i] = off[i] / denom[i]
            denom[i + 1] = diag[i + 1] - off[i] * cprime[i]
        if not np.all(denom > 0):
            raise SolverError("stiffness matrix is not positive definite")
        self.m = m
        self.off, self.denom, self.cprime = off, denom, cprime
        self.diag = diag

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        rhs = np.broadcast_to(rhs, self.batch_shape + (self.m,))
        r = rhs.reshape(-1, self.m).T
        z = np.empty_like(r)
        z[0] = r[0] / self.denom[0]
        for i in range(1, self.m):
            z[i] = (r[i] - self.off[i - 1] * z[i - 1]) / self.denom[i]
        for i in range(self.m - 2, -1, -1):
            z[i] -= self.cprime[i] * z[i + 1]
        return z.T.reshape(self.batch_shape + (self.m,))

    def matvec(self, U: np.ndarray) -> np.ndarray:
        u = np.broadcast_to(U, self.batch_shape + (self.m,)).reshape(-1, self.m).T
        out = self.diag * u
        out[:-1] += self.off * u[1:]
        out[1:] += self.off * u[:-1]
        return out.T.reshape(self.batch_shape + (self.m,))


def residual_norm(factor: TridiagonalFactor, U: np.ndarray, rhs: np.ndarray) -> float:
    """Normwise backward error ``||A U - f|| / (||A|| ||U|| + ||f||)``, max over the batch.

    ``||A||`` is the infinity norm (max absolute row sum).
    """
    res = factor.matvec(U) - rhs
    rows = np.abs(factor.diag).copy()
    rows[:-1] += np.abs(factor.off)
    rows[1:] += np.abs(factor.off)
    anorm = rows.max(axis=0).reshape(factor.batch_shape)
    num = np.linalg.norm(res, np.inf, axis=-1)
    den = anorm * np.linalg.norm(np.broadcast_to(U, res.shape), np.inf, axis=-1)
    den = den + np.linalg.norm(np.broadcast_to(rhs, res.shape), np.inf, axis=-1)
    return float(np.max(np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)))


# --------------------------------------------------------------------------
# solves and norms


def _coefficient_values(a_at, mesh: Mesh1D) -> np.ndarray:
    vals = np.asarray(a_at(mesh.midpoints), dtype=float)
    if vals.shape == ():
        vals = np.full(mesh.m + 1, float(vals))
    if not np.all(vals > 0):
        raise SolverError("a must be positive at every element midpoint")
    return vals


def assemble_solve(a_at, f_at, mesh: Mesh1D) -> FemSolution:
    """Galerkin P1 solution with midpoint quadrature for ``a`` and ``f``."""
    factor = TridiagonalFactor(_coefficient_values(a_at, mesh), mesh.h)
    return FemSolution(factor.solve(load_vector(mesh, f_at)), mesh)


def solve_batch(a_mid: np.ndarray, load: np.ndarray, h: float) -> np.ndarray:
    return TridiagonalFactor(a_mid, h).solve(load)


def v_norm(u: FemSolution) -> float:
    """``||u'||_{L2(0,1)}``, exact for P1."""
    g = u.gradient()
    return math.sqrt(u.mesh.h * float(np.dot(g, g)))


def a_norm(u: FemSolution, a_at) -> float:
    g = u.gradient()
    a = _coefficient_values(a_at, u.mesh)
    return math.sqrt(u.mesh.h * float(np.dot(a * g, g)))


def v_norms_sq(U: np.ndarray, h: float) -> np.ndarray:
    g = gradients(U, h)
    return h * np.einsum("...e,...e->...", g, g)


def a_norms_sq(U: np.ndarray, a_mid: np.ndarray, h: float) -> np.ndarray:
    g = gradients(U, h)
    return h * np.einsum("...e,...e,...e->...", a_mid, g, g)


def dual_norm(f_at, mesh: Mesh1D) -> float:
    """``||f||_{V*}`` as the V-norm of its Riesz representer (the ``a = 1`` solution)."""
    return v_norm(assemble_solve(lambda x: np.ones_like(x), f_at, mesh))


def h1_error(u: FemSolution, du_exact, points: int = 4) -> float:
    """``||(u_h - u)'||_{L2}`` against an exact derivative, Gauss-Legendre per element."""
    t, wts = np.polynomial.legendre.leggauss(points)
    mesh = u.mesh
    left = mesh.all_nodes[:-1]
    x = left[:, None] + 0.5 * mesh.h * (t[None, :] + 1)
    diff = u.gradient()[:, None] - du_exact(x)
    return math.sqrt(float(np.sum(0.5 * mesh.h * wts[None, :] * diff**2)))


# --------------------------------------------------------------------------
# parametric derivatives


def box_indices(caps: Sequence[int]) -> list[tuple[int, ...]]:
    """All dense ``mu <= caps`` sorted by (|mu|, reversed-sparse lexicographic)."""
    out = list(itertools.product(*[range(c + 1) for c in caps]))
    out.sort(key=lambda d: MultiIndex.from_dense(d).sort_key())
    return out


def field_at_midpoints(system: FunctionSystem, J: int, mesh: Mesh1D) -> np.ndarray:
    """``psi_j`` at element midpoints, shape ``(J, m+1)``."""
    return system.matrix(J, mesh.midpoints)


def taylor_derivatives(
    Y: np.ndarray,
    psi_mid: np.ndarray,
    mus: Sequence[tuple[int, ...]],
    mesh: Mesh1D,
    load: np.ndarray,
) -> np.ndarray:
    """Scaled derivatives ``d^mu u(y) / mu!`` for every ``mu`` in ``mus``.

    Parameters
    ----------
    Y : array (B, J)
        Parameter samples.
    psi_mid : array (J, m+1)
        Representation functions at element midpoints.
    mus : sequence of dense tuples of length J
        Must be downward closed.  Computed in order of increasing ``|mu|``.
    load : array (m,)

    Returns
    -------
    array (len(mus), B, m) in the order of ``mus``.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    B, J = Y.shape
    mus = [tuple(int(v) for v in mu) for mu in mus]
    pos = {mu: i for i, mu in enumerate(mus)}
    if len(pos) != len(mus):
        raise ValueError("duplicate multi-indices")
    zero = (0,) * J
    for mu in mus:
        if len(mu) != J:
            raise ValueError(f"multi-index {mu} does not have length J = {J}")
        for j in range(J):
            if mu[j] and mu[:j] + (mu[j] - 1,) + mu[j + 1 :] not in pos:
                raise ValueError(f"index set is not downward closed at {mu}")
    if zero not in pos:
        raise ValueError("index set must contain 0")

    a = np.exp(Y @ psi_mid)
    factor = TridiagonalFactor(a, mesh.h)
    h = mesh.h
    kmax = max((max(mu) for mu in mus), default=0)
    # kernel pieces psi_j**k / k!
    P = np.empty((J, kmax + 1, psi_mid.shape[1]))
    P[:, 0] = 1.0
    for k in range(1, kmax + 1):
        P[:, k] = P[:, k - 1] * psi_mid / k

    W = np.empty((len(mus), B, mesh.m))
    flux = np.empty((len(mus), B, mesh.m + 1))
    order = sorted(range(len(mus)), key=lambda i: sum(mus[i]))
    for i in order:
        mu = mus[i]
        if mu == zero:
            W[i] = factor.solve(load)
        else:
            supp = [j for j in range(J) if mu[j]]
            subs, kern = [], []
            for part in itertools.product(*[range(mu[j] + 1) for j in supp]):
                if all(part[t] == mu[j] for t, j in enumerate(supp)):
                    continue
                nu = list(mu)
                k = np.ones(psi_mid.shape[1])
                for t, j in enumerate(supp):
                    nu[j] = part[t]
                    k = k * P[j, mu[j] - part[t]]
                subs.append(pos[tuple(nu)])
                kern.append(k)
            F = np.einsum("se,sbe->be", np.array(kern), flux[subs])
            W[i] = factor.solve(divergence(F))
        flux[i] = a * gradients(W[i], h)
    return W


def derivative_recursion(
    sample: FieldSample, mu_cap: MultiIndex, mesh: Mesh1D, f_at
) -> dict[MultiIndex, FemSolution]:
    """All ``d^mu u(y)`` for ``mu <= mu_cap``, keyed by multi-index."""
    J = sample.J
    caps = mu_cap.to_dense(J)
    mus = box_indices(caps)
    psi_mid = field_at_midpoints(sample.system, J, mesh)
    W = taylor_derivatives(np.array([sample.y]), psi_mid, mus, mesh, load_vector(mesh, f_at))
    out = {}
    for i, mu in enumerate(mus):
        nu = MultiIndex.from_dense(mu)
        out[nu] = FemSolution(W[i, 0] * nu.factorial(), mesh)
    return out


def solve_sample(sample: FieldSample, mesh: Mesh1D, f_at) -> FemSolution:
    psi_mid = field_at_midpoints(sample.system, sample.J, mesh)
    a = np.exp(np.asarray(sample.y) @ psi_mid)
    return assemble_solve(lambda x: a, f_at, mesh)


# --------------------------------------------------------------------------
# stability and the pointwise weighted bound


def stability_gap(a1, a2, f_at, mesh: Mesh1D) -> tuple[float, float]:
    """``(||u - u~||_V, ||f||_{V*} ||a - a~||_inf / min(a_min, a~_min)**2)``."""
    v1, v2 = _coefficient_values(a1, mesh), _coefficient_values(a2, mesh)
    u1 = assemble_solve(lambda x: v1, f_at, mesh)
    u2 = assemble_solve(lambda x: v2, f_at, mesh)
    lhs = v_norm(FemSolution(u1.coeffs - u2.coeffs, mesh))
    amin = min(v1.min(), v2.min())
    rhs = dual_norm(f_at, mesh) * float(np.max(np.abs(v1 - v2))) / amin**2
    return lhs, rhs


C_LN2 = math.log(2.0)


def critical_constant(r: int) -> float:
    """``ln 2 / sqrt(r)``."""
    return C_LN2 / math.sqrt(r)


@dataclass
class BoundCheck:
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-12)


def weighted_derivative_sums(
    Y: np.ndarray, system: FunctionSystem, w: WeightSequence, mesh: Mesh1D, f_at, norm: str = "a"
) -> tuple[np.ndarray, np.ndarray]:
    """Per sample: ``sum_{||mu||_inf<=r} rho^(2mu)/mu! ||d^mu u||^2`` and ``||u||^2``.

    ``norm`` selects the energy norm of ``a(y)`` (``"a"``) or the V-norm (``"v"``).
    """
    Y = np.atleast_2d(Y)
    J = Y.shape[1]
    mus = box_indices([w.r] * J)
    rho2 = w.array(J) ** 2
    coef = np.array([math.prod(rho2[j] ** mu[j] * math.factorial(mu[j]) for j in range(J)) for mu in mus])
    psi_mid = field_at_midpoints(system, J, mesh)
    W = taylor_derivatives(Y, psi_mid, mus, mesh, load_vector(mesh, f_at))
    if norm == "a":
        a = np.exp(Y @ psi_mid)
        sq = a_norms_sq(W, a[None], mesh.h)
    else:
        sq = v_norms_sq(W, mesh.h)
    # w_mu = d^mu u / mu!, so ||d^mu u||^2 / mu! = mu! ||w_mu||^2
    lhs = np.einsum("m,mb->b", coef, sq)
    return lhs, sq[mus.index((0,) * J)]


def pointwise_derivative_bound_check(
    sample: FieldSample, w: WeightSequence, K: float, mesh: Mesh1D, f_at
) -> BoundCheck:
    """Weighted derivative sum against ``||u||_a**2 / (1 - K/C_r)``.

    ``K`` is the value of ``sup_x sum_j rho_j |psi_j(x)|``; it must be below
    ``C_r = ln 2 / sqrt(r)``.
    """
    Cr = critical_constant(w.r)
    if not 0 <= K < Cr:
        raise ValueError(f"K = {K} must lie in [0, ln2/sqrt(r) = {Cr})")
    lhs, base = weighted_derivative_sums(np.array([sample.y]), sample.system, w, mesh, f_at)
    return BoundCheck(float(lhs[0]), float(base[0]) / (1 - K / Cr))


def pointwise_derivative_bound_batch(
    Y: np.ndarray, system: FunctionSystem, w: WeightSequence, K: float, mesh: Mesh1D, f_at
) -> tuple[np.ndarray, np.ndarray]:
    """Batched form of :func:`pointwise_derivative_bound_check`: ``(lhs, rhs)`` per row of ``Y``."""
    Cr = critical_constant(w.r)
    if not 0 <= K < Cr:
        raise ValueError(f"K = {K} must lie in [0, ln2/sqrt(r) = {Cr})")
    lhs, base = weighted_derivative_sums(Y, system, w, mesh, f_at)
    return lhs, base / (1 - K / Cr)
