"""Monte Carlo checks of exponential moments, solution moments and tail decay."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fem import Mesh1D, TridiagonalFactor, dual_norm, load_vector, make_source, v_norms_sq
from .field import FunctionSystem, sup_grid
from .parallel import chunk_ranges, ordered_map
from .rng import gaussians

SAMPLE_CHUNK = 2048


@dataclass(frozen=True)
class SampleConfig:
    seed: int
    N: int
    J: int
    system: FunctionSystem
    mesh: Mesh1D = field(default_factory=lambda: Mesh1D(255))
    source: object = 1.0
    grid_n: int = 2049
    threads: int = 1

    def samples(self, start: int, stop: int) -> np.ndarray:
        return gaussians(self.seed, start, stop, self.J)


@dataclass
class MCEstimate:
    estimate: float
    std_error: float
    n: int
    infinite: bool = False
    bound_violations: int | None = None

    def __iter__(self):
        return iter((self.estimate, self.std_error))


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    n = values.size
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((values - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def sup_norms_b(cfg: SampleConfig) -> np.ndarray:
    """Grid ``||b_J(y)||_inf`` per sample, in sample order."""
    x = sup_grid(cfg.system, cfg.J, cfg.grid_n)
    P = cfg.system.matrix(cfg.J, x)

    def work(rng):
        return np.max(np.abs(cfg.samples(*rng) @ P), axis=1)

    return np.concatenate(ordered_map(work, chunk_ranges(cfg.N, SAMPLE_CHUNK), cfg.threads))


def mc_exp_moment_b(cfg: SampleConfig, k: float) -> MCEstimate:
    """``E exp(k ||b_J(y)||_inf)`` with its standard error."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return MCEstimate(1.0, 0.0, cfg.N)
    with np.errstate(over="ignore"):
        vals = np.exp(k * sup_norms_b(cfg))
    if not np.all(np.isfinite(vals)):
        return MCEstimate(math.inf, math.inf, cfg.N, infinite=True)
    mean, se = _mean_se(vals)
    if not math.isfinite(mean) or not math.isfinite(se):
        return MCEstimate(math.inf, math.inf, cfg.N, infinite=True)
    return MCEstimate(mean, se, cfg.N)


def solution_norms(cfg: SampleConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per sample ``||u(y)||_V`` and the bound ``||f||_{V*} exp(||b_J(y)||_inf)``.

    The sup-norm in the bound is taken over mesh nodes and element midpoints.
    """
    mesh = cfg.mesh
    f_at = make_source(cfg.source)
    load = load_vector(mesh, f_at)
    fstar = dual_norm(f_at, mesh)
    psi_mid = cfg.system.matrix(cfg.J, mesh.midpoints)
    psi_sup = cfg.system.matrix(cfg.J, mesh.sup_points)

    def work(rng):
        Y = cfg.samples(*rng)
        U = TridiagonalFactor(np.exp(Y @ psi_mid), mesh.h).solve(load)
        bsup = np.max(np.abs(Y @ psi_sup), axis=1)
        return np.sqrt(v_norms_sq(U, mesh.h)), fstar * np.exp(bsup)

    parts = ordered_map(work, chunk_ranges(cfg.N, SAMPLE_CHUNK), cfg.threads)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def mc_moment_u(cfg: SampleConfig, k: float) -> MCEstimate:
    """``E ||u(y)||_V**k``; also counts samples violating the Lax-Milgram bound."""
    if k < 0:
        raise ValueError("k must be >= 0")
    norms, bounds = solution_norms(cfg)
    violations = int(np.sum(norms > bounds * (1 + 1e-12)))
    if k == 0:
        return MCEstimate(1.0, 0.0, cfg.N, bound_violations=violations)
    mean, se = _mean_se(norms**k)
    return MCEstimate(mean, se, cfg.N, bound_violations=violations)


@dataclass
class TailCurve:
    ts: np.ndarray
    P: np.ndarray
    std_error: np.ndarray
    N: int
    low_count: bool  # some expected count below 10

    def slope(self) -> float:
        """Least-squares slope of ``log P`` against ``t**2`` over points with ``P > 0``."""
        ok = self.P > 0
        if ok.sum() < 2:
            raise ValueError("need at least two thresholds with P > 0")
        return float(np.polyfit(self.ts[ok] ** 2, np.log(self.P[ok]), 1)[0])

    def rows(self):
        return [(float(t), float(p), float(s)) for t, p, s in zip(self.ts, self.P, self.std_error)]


def tail_curve(cfg: SampleConfig, ts) -> TailCurve:
    """Empirical ``P(t) = P(||b_J(y)||_inf > t)`` with binomial standard errors."""
    ts = np.asarray(ts, dtype=float)
    s = sup_norms_b(cfg)
    P = np.array([np.count_nonzero(s > t) / cfg.N for t in ts])
    se = np.sqrt(P * (1 - P) / cfg.N)
    low = bool(np.any(P * cfg.N < 10))
    return TailCurve(ts, P, se, cfg.N, low)
