"""Multi-indices, the weights b_nu and best-first enumeration of the smallest weights.

Multi-indices are stored in sparse form as a sorted tuple of ``(j, nu_j)``
pairs with ``j >= 1`` and ``nu_j >= 1``.  Coordinates are 1-based throughout
this package, matching the indexing of the parameter sequence ``y_1, y_2, ...``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class MultiIndex:
    """Finitely supported sequence of nonnegative integers.

    Ordering is graded (by ``|nu|``) and then lexicographic on the sorted
    ``(j, nu_j)`` pairs.
    """

    entries: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        prev = 0
        for j, d in self.entries:
            if j <= prev:
                raise ValueError(f"coordinates must be strictly increasing and >= 1: {self.entries}")
            if d < 1:
                raise ValueError(f"stored degrees must be positive: {self.entries}")
            prev = j

    @classmethod
    def from_dict(cls, degrees: dict[int, int]) -> MultiIndex:
        return cls(tuple(sorted((int(j), int(d)) for j, d in degrees.items() if d != 0)))

    @classmethod
    def from_dense(cls, degrees: Sequence[int]) -> MultiIndex:
        """Build from a dense vector whose position 0 holds ``nu_1``."""
        return cls(tuple((j + 1, int(d)) for j, d in enumerate(degrees) if d != 0))

    @classmethod
    def unit(cls, j: int, k: int = 1) -> MultiIndex:
        return cls(((j, k),)) if k else cls()

    def __getitem__(self, j: int) -> int:
        for jj, d in self.entries:
            if jj == j:
                return d
        return 0

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(j for j, _ in self.entries)

    @property
    def order(self) -> int:
        """``|nu|``, the total degree."""
        return sum(d for _, d in self.entries)

    @property
    def max_degree(self) -> int:
        return max((d for _, d in self.entries), default=0)

    @property
    def max_coordinate(self) -> int:
        return self.entries[-1][0] if self.entries else 0

    def factorial(self) -> int:
        return math.prod(math.factorial(d) for _, d in self.entries)

    def to_dense(self, dim: int) -> tuple[int, ...]:
        if self.max_coordinate > dim:
            raise ValueError(f"{self} has support outside 1..{dim}")
        out = [0] * dim
        for j, d in self.entries:
            out[j - 1] = d
        return tuple(out)

    def to_dict(self) -> dict[int, int]:
        return dict(self.entries)

    def __add__(self, other: MultiIndex) -> MultiIndex:
        d = self.to_dict()
        for j, k in other.entries:
            d[j] = d.get(j, 0) + k
        return MultiIndex.from_dict(d)

    def increment(self, j: int) -> MultiIndex:
        return self + MultiIndex.unit(j)

    def leq(self, other: MultiIndex) -> bool:
        """Componentwise partial order."""
        return all(d <= other[j] for j, d in self.entries)

    def sort_key(self):
        return (self.order, self.entries)

    def __lt__(self, other: MultiIndex):
        return self.sort_key() < other.sort_key()

    def __le__(self, other: MultiIndex):
        return self.sort_key() <= other.sort_key()

    def __gt__(self, other: MultiIndex):
        return self.sort_key() > other.sort_key()

    def __ge__(self, other: MultiIndex):
        return self.sort_key() >= other.sort_key()

    def __str__(self):
        if not self.entries:
            return "0"
        return "+".join(f"{d}e{j}" if d > 1 else f"e{j}" for j, d in self.entries)

    def to_json(self) -> list[list[int]]:
        return [[j, d] for j, d in self.entries]

    @classmethod
    def from_json(cls, data) -> MultiIndex:
        return cls(tuple((int(j), int(d)) for j, d in data))


ZERO = MultiIndex()


def is_downward_closed(indices: Iterable[MultiIndex]) -> bool:
    s = set(indices)
    for nu in s:
        for j, _ in nu.entries:
            if MultiIndex.from_dict({**nu.to_dict(), j: nu[j] - 1}) not in s:
                return False
    return True


def total_degree_set(dim: int, degree_cap: int, max_per_coord: int | None = None) -> list[MultiIndex]:
    """All ``nu`` supported in ``1..dim`` with ``|nu| <= degree_cap``, sorted."""
    cap = degree_cap if max_per_coord is None else min(degree_cap, max_per_coord)
    out = []

    def rec(j, remaining, head):
        if j == dim:
            out.append(MultiIndex.from_dense(head))
            return
        for d in range(min(remaining, cap) + 1):
            rec(j + 1, remaining - d, head + [d])

    rec(0, degree_cap, [])
    return sorted(out)


# --------------------------------------------------------------------------
# weight sequences

_RULES = ("power", "dyadic", "sqrt_log")


@dataclass(frozen=True)
class WeightSequence:
    """Positive sequence ``rho_j`` together with the derivative order cap ``r``.

    Rules (with ``c = scale``, ``kappa = exponent``):

    * ``power``:    ``rho_j = c * j**kappa``
    * ``dyadic``:   ``rho_j = c * 2**(kappa * l)`` with ``j = 2**l + k``
    * ``sqrt_log``: ``rho_j = c * sqrt(2 * log(j + 1))``
    * ``list``:     explicit ``values`` for ``j <= len(values)``; beyond that the
      ``tail`` rule (one of the above, same scale/exponent) or, if ``tail`` is
      None, undefined.
    """

    rule: str = "power"
    scale: float = 1.0
    exponent: float = 0.0
    r: int = 1
    values: tuple[float, ...] = ()
    tail: str | None = None

    def __post_init__(self):
        if self.rule not in _RULES + ("list",):
            raise ValueError(f"unknown weight rule {self.rule!r}")
        if self.rule == "list":
            if not self.values:
                raise ValueError("list rule needs values")
            if any(v <= 0 for v in self.values):
                raise ValueError("weights must be positive")
            if self.tail is not None and self.tail not in _RULES:
                raise ValueError(f"unknown tail rule {self.tail!r}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if int(self.r) != self.r or self.r < 1:
            raise ValueError("r must be an integer >= 1")

    @property
    def tail_rule(self) -> str | None:
        return self.tail if self.rule == "list" else self.rule

    def _closed(self, rule: str, j: int) -> float:
        if rule == "power":
            return self.scale * float(j) ** self.exponent
        if rule == "dyadic":
            return self.scale * 2.0 ** (self.exponent * (j.bit_length() - 1))
        return self.scale * math.sqrt(2.0 * math.log(j + 1))

    def __call__(self, j: int) -> float:
        if j < 1:
            raise ValueError("coordinates start at 1")
        if self.rule == "list":
            if j <= len(self.values):
                return float(self.values[j - 1])
            if self.tail is None:
                raise ValueError(f"rho_{j} undefined: list has {len(self.values)} entries and no tail rule")
            return self._closed(self.tail, j)
        return self._closed(self.rule, j)

    def array(self, J: int) -> np.ndarray:
        return np.array([self(j) for j in range(1, J + 1)])

    def scaled(self, t: float) -> WeightSequence:
        vals = tuple(v * t for v in self.values)
        return WeightSequence(self.rule, self.scale * t, self.exponent, self.r, vals, self.tail)

    def tail_nondecreasing(self) -> bool:
        rule = self.tail_rule
        if rule is None:
            return False
        return rule == "sqrt_log" or self.exponent >= 0

    def to_json(self) -> dict:
        d = {"rule": self.rule, "scale": self.scale, "exponent": self.exponent, "r": self.r}
        if self.rule == "list":
            d["values"] = list(self.values)
            d["tail"] = self.tail
        return d

    @classmethod
    def from_json(cls, d: dict) -> WeightSequence:
        known = {"rule", "scale", "exponent", "r", "values", "tail"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown weight fields: {sorted(extra)}")
        return cls(
            rule=d.get("rule", "power"),
            scale=float(d.get("scale", 1.0)),
            exponent=float(d.get("exponent", 0.0)),
            r=int(d.get("r", 1)),
            values=tuple(float(v) for v in d.get("values", ())),
            tail=d.get("tail"),
        )


# --------------------------------------------------------------------------
# scalar helpers


def binomial(n: int, k: int) -> int:
    """Binomial coefficient with ``C(n, k) = 0`` for ``k > n``.

    Exact (arbitrary precision) integers, so no overflow can occur here;
    callers converting to float get an ``OverflowError`` instead of ``inf``.
    """
    if n < 0 or k < 0:
        raise ValueError("binomial arguments must be nonnegative")
    if k > n:
        return 0
    return math.comb(n, k)


def weight_factor(n: int, rho: float, r: int) -> float:
    """One factor ``sum_{l<=r} C(n, l) rho**(2l)`` of ``b_nu``."""
    rho2 = rho * rho
    total = 0.0
    p = 1.0
    for l in range(min(n, r) + 1):
        total += float(binomial(n, l)) * p
        p *= rho2
    return total


def weight_b(nu: MultiIndex, w: WeightSequence) -> float:
    b = 1.0
    for j, d in nu.entries:
        b *= weight_factor(d, w(j), w.r)
    if not math.isfinite(b):
        raise OverflowError(f"weight b_nu overflows for nu = {nu}")
    return b


def first_excluded_weight(w: WeightSequence, dim_cap: int) -> float:
    """``b_{e_{dim_cap+1}}``: smallest weight an index outside the cap could have."""
    return weight_b(MultiIndex.unit(dim_cap + 1), w)


def enumerate_smallest_weights(n: int, w: WeightSequence, dim_cap: int) -> list[tuple[MultiIndex, float]]:
    """The ``n`` multi-indices supported in ``1..dim_cap`` with smallest ``b_nu``.

    Best-first search over the downward-closed frontier.  Each factor of
    ``b_nu`` is strictly increasing in ``nu_j``, so every predecessor of an
    index is popped before it, and the output is downward closed.  Ties are
    broken by the ``MultiIndex`` order.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if dim_cap < 1:
        raise ValueError("dim_cap must be >= 1")
    heap = [(1.0, ZERO.sort_key(), ZERO)]
    seen = {ZERO}
    out = []
    while len(out) < n:
        b, _, nu = heapq.heappop(heap)
        out.append((nu, b))
        for j in range(1, dim_cap + 1):
            mu = nu.increment(j)
            if mu in seen:
                continue
            seen.add(mu)
            try:
                bm = weight_b(mu, w)
            except OverflowError:
                continue
            heapq.heappush(heap, (bm, mu.sort_key(), mu))
        if not heap and len(out) < n:
            raise OverflowError(f"only {len(out)} indices have finite weight; n = {n} not enumerable")
    return out


def enumerate_box(w: WeightSequence, dim_cap: int, L: int) -> list[tuple[MultiIndex, float]]:
    """Exhaustive enumeration over ``{0..L}**dim_cap`` sorted by (weight, order)."""
    items = []
    for dense in np.ndindex(*([L + 1] * dim_cap)):
        nu = MultiIndex.from_dense(dense)
        items.append((weight_b(nu, w), nu.sort_key(), nu))
    items.sort()
    return [(nu, b) for b, _, nu in items]


# --------------------------------------------------------------------------
# summability of the weights


def summability_constant(r: int, q: float, terms: int = 200000) -> float:
    """``C_{r,q} = sum_{n>=r} C(n, r)**(-q/2)``, or ``inf`` when ``q <= 2/r``.

    Partial sum plus an integral bound on the remainder (an upper bound).
    """
    if q * r <= 2:
        return math.inf
    s = r * q / 2
    n = np.arange(r, r + terms, dtype=float)
    logc = np.zeros_like(n)
    for l in range(r):
        logc += np.log(n - l)
    logc -= math.lgamma(r + 1)
    partial = math.fsum(np.exp(-q / 2 * logc))
    M = r + terms - r + 1  # first neglected n is r + terms; C(n,r) >= (n-r+1)**r / r!
    rem = math.factorial(r) ** (q / 2) * (M ** (-s) + M ** (1 - s) / (s - 1))
    return partial + rem


@dataclass
class TailSum:
    value: float
    tail_bound: float
    factors: list[float] = field(default_factory=list)

    @property
    def upper(self) -> float:
        return self.value + self.tail_bound


def weight_tail_sum(w: WeightSequence, q: float, dim_cap: int, degree_cap: int) -> TailSum:
    """Truncated ``sum_nu b_nu**(-q/2)`` over ``supp(nu) in 1..dim_cap``.

    Evaluated in product form, each one-dimensional factor summed over
    ``n <= degree_cap``.  ``tail_bound`` bounds what the degree truncation
    neglects: for ``n > degree_cap >= r`` each term is at most
    ``(C(n, r) rho**(2r))**(-q/2)``, whose sum is bounded by an integral.
    """
    r = w.r
    if q <= 2 / r:
        raise ValueError(f"sum of b_nu^(-q/2) diverges for q = {q} <= 2/r = {2 / r}")
    if degree_cap < r:
        raise ValueError("degree_cap must be >= r")
    s = r * q / 2
    M = degree_cap + 1 - r + 1  # (n - r + 1) at n = degree_cap + 1
    rem_unit = math.factorial(r) ** (q / 2) * (M ** (-s) + M ** (1 - s) / (s - 1))
    factors, upper = [], []
    for j in range(1, dim_cap + 1):
        rho = w(j)
        terms = [weight_factor(n, rho, r) ** (-q / 2) for n in range(degree_cap + 1)]
        f = math.fsum(terms)
        factors.append(f)
        upper.append(f + rem_unit * rho ** (-r * q))
    value = math.prod(factors)
    return TailSum(value, math.prod(upper) - value, factors)


def q_of_p(p: float) -> float:
    if not 0 < p < 2:
        raise ValueError("p must lie in (0, 2)")
    return 2 * p / (2 - p)


def neumaier_sum(values) -> float:
    """Compensated sum in the given order."""
    s = 0.0
    c = 0.0
    for v in values:
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
    return s + c


def stechkin_tail(sorted_norms: Sequence[float], n: int) -> float:
    """``(sum_{k>n} v_k**2)**0.5`` for a nonincreasing list ``v``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    tail = [float(v) ** 2 for v in sorted_norms[n:]]
    return math.sqrt(neumaier_sum(reversed(tail)))


def fit_rate(ns: Sequence[float], errors: Sequence[float]) -> float:
    """Negated least-squares slope of ``log(error)`` against ``log(n)``."""
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if ns.shape != errors.shape or ns.size < 2:
        raise ValueError("need at least two (n, error) pairs of equal length")
    if np.any(ns <= 0) or np.any(errors <= 0):
        raise ValueError("fit_rate needs positive n and errors")
    slope = np.polyfit(np.log(ns), np.log(errors), 1)[0]
    return float(-slope)
