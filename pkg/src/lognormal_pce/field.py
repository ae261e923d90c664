"""Representation systems (psi_j) on (0, 1) and the truncated Gaussian field.

Supported kinds:

``kl_brownian_bridge``
    ``psi_j(x) = sqrt(2)/(pi j) sin(pi j x)``.
``schauder``
    Levy-Ciesielski hat functions ``psi_j = psi_{l,k}`` with ``j = 2**l + k``,
    ``psi_{l,k}(x) = 2 C 2**(-alpha l) hat(2**l x - k)`` and
    ``hat(x) = max(0, 1/2 - |x - 1/2|)``.  ``C = alpha = 1/2`` is the Brownian
    bridge normalization, with ``sup psi_{l,k} = C 2**(-alpha l)``.
``disjoint_indicator``
    ``psi_j = c_j 1_{D_j}`` for a partition ``(D_j)`` of (0, 1): either
    ``count`` equal cells (finite family) or dyadic cells ``(2**-j, 2**(1-j)]``.
    Amplitudes ``c_j = amp_scale * j**(-amp_exponent)`` or an explicit list.
``scaled_custom``
    ``psi_j = s_j phi_j`` for ``j <= len(scales)`` and zero beyond, where
    ``phi_j`` is the constant function 1, a KL function or a Schauder function.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import gamma, gammaincc

from .multiindex import WeightSequence

KINDS = ("kl_brownian_bridge", "schauder", "disjoint_indicator", "scaled_custom")
_BASES = ("constant", "kl_brownian_bridge", "schauder")

_DEFAULTS: dict[str, dict[str, Any]] = {
    "kl_brownian_bridge": {},
    "schauder": {"C": 0.5, "alpha": 0.5},
    "disjoint_indicator": {"partition": "uniform", "count": 16, "amp_scale": 1.0, "amp_exponent": 1.0},
    "scaled_custom": {"base": "constant", "scales": [1.0]},
}


def level_of(j: int) -> tuple[int, int]:
    """``(l, k)`` with ``j = 2**l + k`` and ``0 <= k < 2**l``."""
    if j < 1:
        raise ValueError("j must be >= 1")
    l = j.bit_length() - 1
    return l, j - (1 << l)


def _hat(x):
    return np.maximum(0.0, 0.5 - np.abs(x - 0.5))


def schauder_eval(l: int, k: int, x, C: float = 0.5, alpha: float = 0.5):
    if l < 0 or not 0 <= k < 2**l:
        raise ValueError(f"Schauder index out of range: l={l}, k={k}")
    vals = 2.0 * C * 2.0 ** (-alpha * l) * _hat(2.0**l * np.asarray(x, dtype=float) - k)
    return float(vals) if np.ndim(vals) == 0 else vals


def kl_eval(j: int, x):
    if j < 1:
        raise ValueError("j must be >= 1")
    vals = math.sqrt(2.0) / (math.pi * j) * np.sin(math.pi * j * np.asarray(x, dtype=float))
    return float(vals) if np.ndim(vals) == 0 else vals


@dataclass(frozen=True)
class FunctionSystem:
    kind: str
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown system kind {self.kind!r}; expected one of {KINDS}")
        params = dict(_DEFAULTS[self.kind])
        unknown = set(self.parameters) - set(params) - {"amplitudes"}
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        params.update(self.parameters)
        if self.kind == "disjoint_indicator":
            if params["partition"] not in ("uniform", "dyadic"):
                raise ValueError("partition must be 'uniform' or 'dyadic'")
            if params["partition"] == "uniform" and int(params["count"]) < 1:
                raise ValueError("count must be >= 1")
        if self.kind == "scaled_custom" and params["base"] not in _BASES:
            raise ValueError(f"base must be one of {_BASES}")
        if self.kind == "schauder" and (params["alpha"] <= 0 or params["C"] <= 0):
            raise ValueError("Schauder C and alpha must be positive")
        object.__setattr__(self, "parameters", params)

    # ---------------------------------------------------------------- helpers
    @property
    def p(self):
        return self.parameters

    def n_functions(self) -> int | None:
        """Number of nonzero functions, or None for an infinite family."""
        if self.kind == "disjoint_indicator" and self.p["partition"] == "uniform":
            return int(self.p["count"])
        if self.kind == "scaled_custom":
            return len(self.p["scales"])
        return None

    def _amplitude(self, j: int) -> float:
        amps = self.p.get("amplitudes")
        if amps is not None:
            return float(amps[j - 1]) if j <= len(amps) else 0.0
        return float(self.p["amp_scale"]) * j ** (-float(self.p["amp_exponent"]))

    def _cell(self, j: int) -> tuple[float, float]:
        if self.p["partition"] == "uniform":
            n = int(self.p["count"])
            return (j - 1) / n, j / n
        return 2.0 ** (-j), 2.0 ** (1 - j)

    def _inactive(self, j: int) -> bool:
        n = self.n_functions()
        return n is not None and j > n

    # ---------------------------------------------------------------- interface
    def eval(self, j: int, x):
        """``psi_j(x)`` for scalar or array ``x`` in [0, 1]."""
        if j < 1:
            raise ValueError("j must be >= 1")
        x = np.asarray(x, dtype=float)
        if self._inactive(j):
            vals = np.zeros_like(x)
        elif self.kind == "kl_brownian_bridge":
            vals = np.asarray(kl_eval(j, x))
        elif self.kind == "schauder":
            l, k = level_of(j)
            vals = np.asarray(schauder_eval(l, k, x, self.p["C"], self.p["alpha"]))
        elif self.kind == "disjoint_indicator":
            lo, hi = self._cell(j)
            if self.p["partition"] == "uniform":
                last = j == int(self.p["count"])
                inside = (x >= lo) & ((x < hi) | (last & (x <= hi)))
            else:
                inside = (x > lo) & (x <= hi)
            vals = np.where(inside, self._amplitude(j), 0.0)
        else:
            s = float(self.p["scales"][j - 1])
            base = self.p["base"]
            if base == "constant":
                vals = np.full_like(x, s)
            elif base == "kl_brownian_bridge":
                vals = s * np.asarray(kl_eval(j, x))
            else:
                l, k = level_of(j)
                vals = s * np.asarray(schauder_eval(l, k, x))
        return float(vals) if vals.ndim == 0 else vals

    def sup_norm(self, j: int) -> float:
        if self._inactive(j):
            return 0.0
        if self.kind == "kl_brownian_bridge":
            return math.sqrt(2.0) / (math.pi * j)
        if self.kind == "schauder":
            return self.p["C"] * 2.0 ** (-self.p["alpha"] * level_of(j)[0])
        if self.kind == "disjoint_indicator":
            return abs(self._amplitude(j))
        s = abs(float(self.p["scales"][j - 1]))
        base = self.p["base"]
        if base == "constant":
            return s
        if base == "kl_brownian_bridge":
            return s * math.sqrt(2.0) / (math.pi * j)
        return s * 0.5 * 2.0 ** (-0.5 * level_of(j)[0])

    def support(self, j: int) -> tuple[float, float]:
        """Closed interval outside of which ``psi_j`` vanishes."""
        if self._inactive(j):
            return (0.0, 0.0)
        if self.kind == "schauder" or (self.kind == "scaled_custom" and self.p["base"] == "schauder"):
            l, k = level_of(j)
            return k * 2.0**-l, (k + 1) * 2.0**-l
        if self.kind == "disjoint_indicator":
            return self._cell(j)
        return (0.0, 1.0)

    def matrix(self, J: int, x) -> np.ndarray:
        """Array of shape ``(J, len(x))`` with rows ``psi_j(x)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.stack([np.atleast_1d(self.eval(j, x)) for j in range(1, J + 1)]) if J else np.zeros((0, x.size))

    def feature_points(self, J: int) -> np.ndarray:
        """Points where the structure of psi_1..psi_J is decided (peaks, cell centres)."""
        pts = []
        for j in range(1, J + 1):
            lo, hi = self.support(j)
            if self.kind == "kl_brownian_bridge":
                pts.extend((2 * i + 1) / (2 * j) for i in range(j))
            elif hi > lo:
                pts.extend((lo, 0.5 * (lo + hi), hi))
        return np.array(pts, dtype=float)

    # ---------------------------------------------------------------- persistence
    def to_json(self, J: int | None = None) -> dict:
        d = {"kind": self.kind, "parameters": dict(self.parameters)}
        if J is not None:
            d["J"] = J
        return d

    @classmethod
    def from_json(cls, d: dict) -> FunctionSystem:
        extra = set(d) - {"kind", "parameters", "J"}
        if extra:
            raise ValueError(f"unknown system fields: {sorted(extra)}")
        if "kind" not in d:
            raise ValueError("system description needs a 'kind'")
        return cls(d["kind"], dict(d.get("parameters", {})))

    def dumps(self, J: int | None = None) -> str:
        return json.dumps(self.to_json(J), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> tuple[FunctionSystem, int | None]:
        d = json.loads(text)
        return cls.from_json(d), d.get("J")


def kl_system() -> FunctionSystem:
    return FunctionSystem("kl_brownian_bridge")


def schauder_system(C: float = 0.5, alpha: float = 0.5) -> FunctionSystem:
    return FunctionSystem("schauder", {"C": C, "alpha": alpha})


def constant_system(*scales: float) -> FunctionSystem:
    """``psi_j`` constant on (0, 1) with the given values."""
    return FunctionSystem("scaled_custom", {"base": "constant", "scales": [float(s) for s in scales]})


def barely_summable_indicators(q: float, count: int | None = None, amp_scale: float = 1.0) -> FunctionSystem:
    """Disjoint indicators with ``c_j = j**(-1/q - 0.01)``, just inside l^q."""
    params = {"amp_scale": amp_scale, "amp_exponent": 1.0 / q + 0.01}
    params.update({"partition": "uniform", "count": count} if count else {"partition": "dyadic"})
    return FunctionSystem("disjoint_indicator", params)


def bridge_covariance(x, xp):
    """``min(x, x') - x x'``."""
    return np.minimum(x, xp) - np.asarray(x) * np.asarray(xp)


# --------------------------------------------------------------------------
# field samples


@dataclass(frozen=True)
class FieldSample:
    y: tuple[float, ...]
    system: FunctionSystem

    def __post_init__(self):
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))

    @property
    def J(self) -> int:
        return len(self.y)

    def __call__(self, x):
        return field_eval(self, x)


def field_eval(sample: FieldSample, x):
    """``b_J(y)(x) = sum_{j<=J} y_j psi_j(x)``, compensated summation in increasing j."""
    xa = np.asarray(x, dtype=float)
    s = np.zeros_like(xa)
    c = np.zeros_like(xa)
    for j, yj in enumerate(sample.y, start=1):
        v = yj * np.asarray(sample.system.eval(j, xa))
        t = s + v
        c += np.where(np.abs(s) >= np.abs(v), (s - t) + v, (v - t) + s)
        s = t
    out = s + c
    return float(out) if out.ndim == 0 else out


def sup_grid(system: FunctionSystem, J: int, grid_n: int) -> np.ndarray:
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    x = np.concatenate([np.linspace(0.0, 1.0, grid_n), system.feature_points(J)])
    return np.unique(np.clip(x, 0.0, 1.0))


# --------------------------------------------------------------------------
# structural conditions


@dataclass
class SupWeightedSum:
    grid_value: float
    tail_bound: float | None  # None: no analytic knowledge for this pairing
    grid_n: int

    @property
    def divergent(self) -> bool:
        return self.tail_bound is not None and math.isinf(self.tail_bound)

    @property
    def bound(self) -> float | None:
        return None if self.tail_bound is None else self.grid_value + self.tail_bound


def _level_rho_bound(rho: WeightSequence, l: int) -> float | None:
    """Upper bound of ``rho_j`` over the dyadic level ``2**l <= j < 2**(l+1)``."""
    rule = rho.tail_rule
    if rule == "dyadic":
        return rho.scale * 2.0 ** (rho.exponent * l)
    if rule == "power":
        return rho.scale * 2.0 ** (max(rho.exponent, 0.0) * (l + 1))
    return None


def _tail_bound(system: FunctionSystem, rho: WeightSequence, J: int) -> float | None:
    n = system.n_functions()
    if n is not None:
        if J >= n:
            return 0.0
        # finite remainder; for indicators the cells are disjoint so take the max
        vals = [rho(j) * system.sup_norm(j) for j in range(J + 1, n + 1)]
        if system.kind == "disjoint_indicator":
            return max(vals)
        return math.fsum(vals)
    if rho.rule == "list" and J < len(rho.values):
        return None
    if rho.tail_rule is None:
        return None
    if system.kind == "schauder":
        C, alpha = system.p["C"], system.p["alpha"]
        l0 = level_of(J + 1)[0]
        if rho.tail_rule == "dyadic":
            kappa, pref = rho.exponent, C * rho.scale
        elif rho.tail_rule == "power":
            kappa = max(rho.exponent, 0.0)
            pref = C * rho.scale * 2.0**kappa
        else:
            return math.inf
        ratio = 2.0 ** (kappa - alpha)
        if ratio >= 1:
            return math.inf
        return pref * ratio**l0 / (1 - ratio)
    if system.kind == "kl_brownian_bridge":
        if rho.tail_rule == "power" and rho.exponent < 0:
            kappa = rho.exponent
            return rho.scale * math.sqrt(2) / math.pi * J**kappa / (-kappa)
        return math.inf
    if system.kind == "disjoint_indicator" and system.p.get("amplitudes") is None:
        beta = float(system.p["amp_exponent"])
        c0 = float(system.p["amp_scale"])
        if rho.tail_rule == "power":
            if rho.exponent <= beta:
                return rho.scale * c0 * (J + 1) ** (rho.exponent - beta)
            return math.inf
        return None
    return None


def sup_weighted_sum(system: FunctionSystem, rho: WeightSequence, J: int, grid_n: int = 4097) -> SupWeightedSum:
    """Grid maximum of ``sum_{j<=J} rho_j |psi_j(x)|`` plus an analytic tail bound for ``j > J``."""
    x = sup_grid(system, J, grid_n)
    if J:
        P = np.abs(system.matrix(J, x))
        total = rho.array(J) @ P
        grid_value = float(total.max())
    else:
        grid_value = 0.0
    return SupWeightedSum(grid_value, _tail_bound(system, rho, J), grid_n)


def overlap_constant(system: FunctionSystem, J: int, grid_n: int = 4097, per_level: bool = False) -> int:
    """Largest number of ``psi_j``, ``j <= J``, nonzero at a common grid point.

    With ``per_level`` the count is restricted to one dyadic level at a time.
    """
    x = sup_grid(system, J, grid_n)
    nz = system.matrix(J, x) != 0
    if not per_level:
        return int(nz.sum(axis=0).max())
    best = 0
    for l in range(level_of(J)[0] + 1):
        lo, hi = 2**l, min(2 ** (l + 1) - 1, J)
        best = max(best, int(nz[lo - 1 : hi].sum(axis=0).max()))
    return best


@dataclass
class AssumptionACheck:
    partial_sum: float
    tail_bound: float
    status: str  # "satisfied", "divergent" or "unknown"

    @property
    def satisfied(self) -> bool | None:
        return {"satisfied": True, "divergent": False}.get(self.status)


def _exp_rho2_tail(rule: str, c: float, kappa: float, start: int) -> float:
    """Certified upper bound of ``sum_{j>=start} exp(-rho_j**2)`` for a closed rule."""
    if rule == "power":
        if kappa <= 0:
            return math.inf
        a = 1.0 / (2 * kappa)
        z = c * c * start ** (2 * kappa)
        integral = a * c ** (-2 * a) * gammaincc(a, z) * gamma(a)
        return math.exp(-z) + integral
    if rule == "sqrt_log":
        s = 2 * c * c
        if s <= 1:
            return math.inf
        m = start + 1
        return m ** (-s) + m ** (1 - s) / (s - 1)
    # dyadic: sum over whole levels from the level of `start`
    if kappa <= 0:
        return math.inf
    l = level_of(start)[0]
    total = 0.0
    for _ in range(400):
        t = 2.0**l * math.exp(-(c * c) * 4.0 ** (kappa * l))
        ratio = 2.0 * math.exp(-(c * c) * 4.0 ** (kappa * l) * (4.0**kappa - 1))
        total += t
        if ratio < 0.5:
            return total + t * ratio / (1 - ratio)
        l += 1
    return math.inf


def check_assumption_A(rho: WeightSequence, J: int) -> AssumptionACheck:
    """Partial sum of ``exp(-rho_j**2)`` over ``j <= J`` and a certified tail bound.

    A list without a tail rule yields status ``unknown``.
    """
    if J < 1:
        raise ValueError("J must be >= 1")
    if rho.rule == "list" and rho.tail is None and J >= len(rho.values):
        partial = math.fsum(math.exp(-rho(j) ** 2) for j in range(1, len(rho.values) + 1))
        return AssumptionACheck(partial, math.nan, "unknown")
    partial = math.fsum(math.exp(-rho(j) ** 2) for j in range(1, J + 1))
    if rho.tail_rule is None:
        return AssumptionACheck(partial, math.nan, "unknown")
    start = J + 1
    extra = 0.0
    if rho.rule == "list" and start <= len(rho.values):
        extra = math.fsum(math.exp(-rho(j) ** 2) for j in range(start, len(rho.values) + 1))
        start = len(rho.values) + 1
    tail = extra + _exp_rho2_tail(rho.tail_rule, rho.scale, rho.exponent, start)
    return AssumptionACheck(partial, tail, "satisfied" if math.isfinite(tail) else "divergent")
