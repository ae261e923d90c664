"""Hermite coefficients of the solution map by tensor Gauss-Hermite quadrature.

Every tensor node costs one FEM solve, shared by all multi-indices.  Nodes
are swept in lexicographic order in fixed-size chunks; chunk partial sums are
merged in chunk order with compensated summation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .fem import (
    FemSolution,
    Mesh1D,
    box_indices,
    field_at_midpoints,
    load_vector,
    solve_batch,
    taylor_derivatives,
    v_norm,
    v_norms_sq,
)
from .field import FunctionSystem
from .hermite import gauss_hermite, hermite_table
from .multiindex import (
    MultiIndex,
    WeightSequence,
    enumerate_smallest_weights,
    is_downward_closed,
    stechkin_tail,
    total_degree_set,
    weight_b,
)
from .parallel import chunk_ranges, ordered_map

MAX_TENSOR_NODES = 10**7
NODE_CHUNK = 2048


class ResourceGuardError(RuntimeError):
    """Requested tensor grid exceeds the configured node budget."""


class CoverageError(ValueError):
    """An index set required by a computation lies outside the computed set."""


@dataclass
class HermiteCoefficient:
    nu: MultiIndex
    u_nu: FemSolution
    norm_v: float = field(init=False)

    def __post_init__(self):
        self.norm_v = v_norm(self.u_nu)


@dataclass
class PceExpansion:
    system: FunctionSystem
    J: int
    lam: list[MultiIndex]
    coefficients: list[HermiteCoefficient]
    quad_order: int
    mesh: Mesh1D
    source: object = 1.0
    mean_square_norm: float = math.nan  # quadrature value of E ||u(y)||_V^2

    def norms(self) -> np.ndarray:
        return np.array([c.norm_v for c in self.coefficients])

    def coefficient(self, nu: MultiIndex) -> HermiteCoefficient:
        return self.coefficients[self.lam.index(nu)]

    def next_function_sup(self) -> float:
        """``||psi_{J+1}||_inf``, the dimension-truncation diagnostic."""
        return self.system.sup_norm(self.J + 1)

    # ------------------------------------------------------------ export
    def to_json(self) -> dict:
        return {
            "metadata": {
                "system": self.system.to_json(self.J),
                "J": self.J,
                "quad_order": self.quad_order,
                "mesh_m": self.mesh.m,
                "f": self.source,
                "mean_square_norm": self.mean_square_norm,
                "next_function_sup": self.next_function_sup(),
            },
            "coefficients": [{"nu": c.nu.to_json(), "norm_v": c.norm_v} for c in self.coefficients],
        }

    def save(self, json_path, array_path=None):
        """Write the JSON summary and optionally the nodal vectors.

        The array file is raw little-endian float64, row-major with shape
        ``(len(lam), mesh.m)``, rows in the order of the JSON list.
        """
        Path(json_path).write_text(json.dumps(self.to_json(), indent=1) + "\n")
        if array_path is not None:
            arr = np.stack([c.u_nu.coeffs for c in self.coefficients]).astype("<f8")
            Path(array_path).write_bytes(arr.tobytes(order="C"))

    @staticmethod
    def load_arrays(array_path, n_coeffs: int, m: int) -> np.ndarray:
        return np.frombuffer(Path(array_path).read_bytes(), dtype="<f8").reshape(n_coeffs, m)


def _neumaier_add(s: np.ndarray, c: np.ndarray, v: np.ndarray):
    t = s + v
    c += np.where(np.abs(s) >= np.abs(v), (s - t) + v, (v - t) + s)
    return t


def tensor_grid(quad_order: int, J: int):
    """1D rule plus the total node count, with the budget guard applied."""
    count = quad_order**J
    if count > MAX_TENSOR_NODES:
        raise ResourceGuardError(f"{quad_order}^{J} = {count} tensor nodes exceeds the limit {MAX_TENSOR_NODES}")
    return gauss_hermite(quad_order), count


def _node_chunk(rule, J: int, start: int, stop: int):
    idx = np.stack(np.unravel_index(np.arange(start, stop), (rule.order,) * J), axis=1) if J else np.zeros((stop - start, 0), int)
    Y = rule.nodes[idx]
    wts = np.prod(rule.weights[idx], axis=1)
    return idx, Y, wts


def compute_expansion(
    system: FunctionSystem,
    J: int,
    lam: Sequence[MultiIndex],
    quad_order: int,
    mesh: Mesh1D,
    f_at,
    threads: int = 1,
    source=1.0,
) -> PceExpansion:
    """Hermite coefficients ``u_nu`` for ``nu`` in ``lam`` by ``quad_order**J`` tensor Gauss-Hermite."""
    lam = sorted(set(lam))
    if not lam:
        raise ValueError("empty index set")
    if any(nu.max_coordinate > J for nu in lam):
        raise ValueError(f"index set must be supported in 1..{J}")
    maxdeg = max(nu.max_degree for nu in lam)
    if maxdeg >= quad_order:
        raise ValueError(f"quad_order {quad_order} cannot resolve degree {maxdeg}")
    rule, count = tensor_grid(quad_order, J)
    H1 = hermite_table(maxdeg, rule.nodes)  # (maxdeg+1, q)
    D = np.array([nu.to_dense(J) for nu in lam], dtype=int).reshape(len(lam), J)
    psi_mid = field_at_midpoints(system, J, mesh)
    load = load_vector(mesh, f_at)

    def work(rng):
        idx, Y, wts = _node_chunk(rule, J, *rng)
        U = solve_batch(np.exp(Y @ psi_mid), load, mesh.h)
        Hn = np.ones((len(lam), len(wts)))
        for j in range(J):
            Hn *= H1[D[:, j]][:, idx[:, j]]
        return (Hn * wts) @ U, float(np.dot(wts, v_norms_sq(U, mesh.h)))

    acc = np.zeros((len(lam), mesh.m))
    comp = np.zeros_like(acc)
    ms, ms_c = 0.0, []
    for part, sq in ordered_map(work, chunk_ranges(count, NODE_CHUNK), threads):
        acc = _neumaier_add(acc, comp, part)
        ms_c.append(sq)
    ms = math.fsum(ms_c)
    coeffs = [HermiteCoefficient(nu, FemSolution(acc[i] + comp[i], mesh)) for i, nu in enumerate(lam)]
    return PceExpansion(system, J, lam, coeffs, quad_order, mesh, source, ms)


def default_index_set(J: int, degree_cap: int, quad_order: int) -> list[MultiIndex]:
    """Total-degree simplex capped per coordinate at ``quad_order - 1``."""
    return total_degree_set(J, degree_cap, quad_order - 1)


# --------------------------------------------------------------------------
# truncation errors


def sorted_norms(expansion: PceExpansion) -> list[tuple[MultiIndex, float]]:
    """Coefficient norms in decreasing order, ties broken by the multi-index order."""
    pairs = [(c.nu, c.norm_v) for c in expansion.coefficients]
    return sorted(pairs, key=lambda p: (-p[1], p[0].sort_key()))


def best_n_term_errors(expansion: PceExpansion, ns: Sequence[int]) -> list[tuple[int, float]]:
    """Relative l2 tails after keeping the ``n`` largest coefficients."""
    vals = [v for _, v in sorted_norms(expansion)]
    total = stechkin_tail(vals, 0)
    out = []
    for n in ns:
        if not 0 <= n <= len(vals):
            raise ValueError(f"n = {n} outside 0..{len(vals)}")
        out.append((n, stechkin_tail(vals, n) / total if total > 0 else 0.0))
    return out


@dataclass
class AprioriError:
    n: int
    error: float
    bound: float


def apriori_errors(expansion: PceExpansion, w: WeightSequence, ns: Sequence[int]) -> list[AprioriError]:
    """Errors of the truncation to the ``n`` smallest weights ``b_nu``.

    ``bound`` is ``sup_{nu not in Lambda_n} b_nu**-0.5 (sum b_nu ||u_nu||^2)**0.5``,
    all relative to the l2 norm of the computed coefficients.
    """
    nmax = max(ns)
    ranked = enumerate_smallest_weights(nmax + 1, w, expansion.J)
    have = {c.nu: c.norm_v for c in expansion.coefficients}
    total = math.sqrt(math.fsum(v * v for v in have.values()))
    weighted = math.sqrt(math.fsum(weight_b(nu, w) * v * v for nu, v in have.items()))
    out = []
    for n in ns:
        chosen = [nu for nu, _ in ranked[:n]]
        missing = [nu for nu in chosen if nu not in have]
        if missing:
            raise CoverageError(f"Lambda_{n} needs {len(missing)} indices outside the computed set, e.g. {missing[0]}")
        keep = set(chosen)
        tail = math.sqrt(math.fsum(sorted(v * v for nu, v in have.items() if nu not in keep)))
        bound = weighted / math.sqrt(ranked[n][1])
        out.append(AprioriError(n, tail / total, bound / total))
    return out


# --------------------------------------------------------------------------
# weighted identity


@dataclass
class IdentityResult:
    lhs: float
    rhs: float
    rel_gap: float
    mu_terms: list[tuple[MultiIndex, float]]
    nu_terms: list[tuple[MultiIndex, float, float]]  # (nu, b_nu, ||u_nu||^2)


DERIV_CHUNK = 256


def weighted_derivative_integral(
    system: FunctionSystem, J: int, w: WeightSequence, quad_order: int, mesh: Mesh1D, f_at, threads: int = 1
) -> list[tuple[MultiIndex, float]]:
    """Per ``||mu||_inf <= r``: ``rho^(2mu)/mu! * int ||d^mu u||_V^2 dgamma`` by tensor quadrature."""
    rule, count = tensor_grid(quad_order, J)
    mus = box_indices([w.r] * J)
    rho2 = w.array(J) ** 2
    coef = np.array([math.prod(rho2[j] ** mu[j] * math.factorial(mu[j]) for j in range(J)) for mu in mus])
    psi_mid = field_at_midpoints(system, J, mesh)
    load = load_vector(mesh, f_at)

    def work(rng):
        _, Y, wts = _node_chunk(rule, J, *rng)
        W = taylor_derivatives(Y, psi_mid, mus, mesh, load)
        return v_norms_sq(W, mesh.h) @ wts

    parts = ordered_map(work, chunk_ranges(count, DERIV_CHUNK), threads)
    integrals = [math.fsum(p[i] for p in parts) for i in range(len(mus))]
    return [(MultiIndex.from_dense(mu), float(c * v)) for mu, c, v in zip(mus, coef, integrals)]


def identity_check(
    system: FunctionSystem,
    J: int,
    w: WeightSequence,
    quad_order: int,
    mesh: Mesh1D,
    f_at,
    degree_cap: int,
    threads: int = 1,
) -> IdentityResult:
    """Both sides of the weighted Parseval identity at matched truncation.

    lhs: weighted integrals of ``||d^mu u||_V^2`` over ``||mu||_inf <= r``.
    rhs: ``sum b_nu ||u_nu||_V^2`` over ``|nu| <= degree_cap``.
    """
    if degree_cap >= quad_order:
        raise ValueError(f"quad_order {quad_order} cannot resolve degree_cap {degree_cap}")
    mu_terms = weighted_derivative_integral(system, J, w, quad_order, mesh, f_at, threads)
    lam = default_index_set(J, degree_cap, quad_order)
    exp = compute_expansion(system, J, lam, quad_order, mesh, f_at, threads)
    nu_terms = [(c.nu, weight_b(c.nu, w), c.norm_v**2) for c in exp.coefficients]
    lhs = math.fsum(v for _, v in mu_terms)
    rhs = math.fsum(b * s for _, b, s in nu_terms)
    gap = abs(lhs - rhs) / lhs if lhs > 0 else abs(rhs)
    return IdentityResult(lhs, rhs, gap, mu_terms, nu_terms)


def bessel_gap(expansion: PceExpansion) -> float:
    """``E||u||^2 - sum ||u_nu||^2``; nonnegative up to quadrature error."""
    return expansion.mean_square_norm - math.fsum(c.norm_v**2 for c in expansion.coefficients)


def check_downward_closed(expansion: PceExpansion) -> bool:
    return is_downward_closed(expansion.lam)
