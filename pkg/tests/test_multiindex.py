import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lognormal_pce.multiindex import (
    ZERO,
    MultiIndex,
    WeightSequence,
    binomial,
    enumerate_box,
    enumerate_smallest_weights,
    first_excluded_weight,
    fit_rate,
    is_downward_closed,
    q_of_p,
    stechkin_tail,
    summability_constant,
    total_degree_set,
    weight_b,
    weight_tail_sum,
)

RULES = [
    WeightSequence("power", 1.0, 1.0),
    WeightSequence("dyadic", 1.0, 0.5),
    WeightSequence("sqrt_log", 1.0),
]


def brute_weights(w, dim, L):
    """Independent oracle: every dense vector in {0..L}^dim.

    Ranking uses ``weight_b`` so that exact mathematical ties (common with
    dyadic rho) are broken by the index order rather than by rounding noise;
    ``weight_b`` itself is checked against the defining product here.
    """
    out = []
    for dense in itertools.product(range(L + 1), repeat=dim):
        b = 1.0
        for j, n in enumerate(dense, start=1):
            b *= sum(math.comb(n, l) * w(j) ** (2 * l) for l in range(min(n, w.r) + 1))
        nu = MultiIndex.from_dense(dense)
        assert weight_b(nu, w) == pytest.approx(b, rel=1e-13)
        out.append((nu, weight_b(nu, w)))
    out.sort(key=lambda p: (p[1], p[0].sort_key()))
    return out


# ---------------------------------------------------------------- MultiIndex


def test_multiindex_basic():
    nu = MultiIndex.from_dict({3: 2, 1: 1, 5: 0})
    assert nu.entries == ((1, 1), (3, 2))
    assert nu[3] == 2 and nu[2] == 0
    assert nu.order == 3 and nu.max_degree == 2 and nu.max_coordinate == 3
    assert nu.factorial() == 2
    assert nu.to_dense(4) == (1, 0, 2, 0)
    assert MultiIndex.from_dense((1, 0, 2)) == nu
    assert MultiIndex.from_json(nu.to_json()) == nu
    assert str(nu) == "e1+2e3" and str(ZERO) == "0"
    with pytest.raises(ValueError):
        nu.to_dense(2)
    with pytest.raises(ValueError):
        MultiIndex(((2, 1), (1, 1)))


def test_graded_lex_order():
    idx = sorted([MultiIndex.unit(2), MultiIndex.unit(1, 2), ZERO, MultiIndex.unit(1)])
    assert idx == [ZERO, MultiIndex.unit(1), MultiIndex.unit(2), MultiIndex.unit(1, 2)]


def test_total_degree_set_size_and_closure():
    lam = total_degree_set(4, 3)
    assert len(lam) == math.comb(4 + 3, 3)
    assert is_downward_closed(lam)
    assert not is_downward_closed([ZERO, MultiIndex.unit(1, 2)])
    assert all(nu.max_degree <= 1 for nu in total_degree_set(3, 3, max_per_coord=1))


# ---------------------------------------------------------------- scalar helpers


@pytest.mark.parametrize("n,k,val", [(0, 0, 1), (3, 5, 0), (6, 2, 15)])
def test_binomial(n, k, val):
    assert binomial(n, k) == val


def test_weight_b_examples():
    assert weight_b(ZERO, RULES[0]) == 1.0
    assert weight_b(MultiIndex.unit(1), WeightSequence("list", values=(2.0,), r=1)) == 5.0
    assert weight_b(MultiIndex.unit(1, 2), WeightSequence("power", 1.0, 0.0, r=2)) == 4.0


def test_q_of_p():
    assert q_of_p(1.0) == pytest.approx(2.0)
    assert q_of_p(4 / 3) == pytest.approx(4.0)
    assert q_of_p(2 - 1e-9) > 1e8


def test_stechkin_tail():
    assert stechkin_tail([3, 2, 1], 3) == 0.0
    assert stechkin_tail([3, 2, 1], 1) == pytest.approx(math.sqrt(5))
    assert stechkin_tail([1, 1, 1, 1], 0) == pytest.approx(2.0)


def test_fit_rate():
    ns = list(range(1, 50))
    assert fit_rate(ns, [1 / n for n in ns]) == pytest.approx(1.0)
    assert fit_rate(ns, [0.3] * len(ns)) == pytest.approx(0.0, abs=1e-12)
    assert fit_rate(ns, [5 * n**-0.5 for n in ns]) == pytest.approx(0.5)


# ---------------------------------------------------------------- enumeration


def test_enumerate_examples():
    w = WeightSequence("power", 1.0, 1.0, r=1)
    assert enumerate_smallest_weights(1, w, 3) == [(ZERO, 1.0)]
    got = enumerate_smallest_weights(4, w, 4)
    assert [b for _, b in got] == [1.0, 2.0, 3.0, 4.0]
    assert [nu for nu, _ in got] == [ZERO, MultiIndex.unit(1), MultiIndex.unit(1, 2), MultiIndex.unit(1, 3)]


@pytest.mark.parametrize("w", RULES, ids=lambda w: w.rule)
@pytest.mark.parametrize("r", [1, 2, 3])
def test_enumerate_matches_brute_force(w, r):
    w = WeightSequence(w.rule, w.scale, w.exponent, r=r)
    dim, n = 3, 60
    got = enumerate_smallest_weights(n, w, dim)
    L = 6
    while True:
        oracle = brute_weights(w, dim, L)
        # the box is large enough once every index outside it is heavier than got[-1]
        if min(weight_b(MultiIndex.unit(j, L + 1), w) for j in range(1, dim + 1)) > got[-1][1]:
            break
        L += 2
    assert got == oracle[:n]
    assert enumerate_box(w, dim, L)[:n] == got


def test_first_excluded_weight():
    w = WeightSequence("power", 1.0, 1.0, r=1)
    assert first_excluded_weight(w, 3) == 1 + 16


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.integers(0, 4), min_size=1, max_size=4),
    st.lists(st.integers(0, 4), min_size=1, max_size=4),
    st.integers(1, 3),
    st.floats(0.3, 3.0),
    st.floats(1.0, 4.0),
)
def test_weight_monotone(a, b, r, scale, t):
    w = WeightSequence("power", scale, 0.5, r=r)
    nu = MultiIndex.from_dense(a)
    mu = MultiIndex.from_dense([max(x, y) for x, y in itertools.zip_longest(a, b, fillvalue=0)])
    assert nu.leq(mu)
    assert 1.0 <= weight_b(nu, w) <= weight_b(mu, w)
    assert weight_b(nu, w.scaled(t)) >= weight_b(nu, w)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 120), st.integers(1, 4), st.integers(1, 3), st.sampled_from(RULES))
def test_enumeration_downward_closed_and_sorted(n, dim, r, w):
    w = WeightSequence(w.rule, w.scale, w.exponent, r=r)
    got = enumerate_smallest_weights(n, w, dim)
    assert len(got) == n
    assert is_downward_closed(nu for nu, _ in got)
    bs = [b for _, b in got]
    assert bs == sorted(bs)
    assert all(weight_b(nu, w) == b for nu, b in got)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=30))
def test_stechkin_nonincreasing(vals):
    vals = sorted(vals, reverse=True)
    tails = [stechkin_tail(vals, n) for n in range(len(vals) + 1)]
    assert all(x >= y for x, y in zip(tails, tails[1:]))


# ---------------------------------------------------------------- tail sums


def test_weight_tail_sum_basel():
    w = WeightSequence("list", values=(1.0,), r=1)
    res = weight_tail_sum(w, 4.0, 1, 2000)
    assert res.value <= math.pi**2 / 6 <= res.upper
    assert res.upper - res.value < 1e-3


def test_weight_tail_sum_large_rho():
    w = WeightSequence("list", values=(1e6,), r=1)
    assert weight_tail_sum(w, 4.0, 1, 50).upper == pytest.approx(1.0, abs=1e-10)


def test_weight_tail_sum_boundary():
    with pytest.raises(ValueError):
        weight_tail_sum(WeightSequence("power", 1.0, 1.0, r=1), 2.0, 2, 10)


def test_summability_constant_q4_r1():
    # one coordinate with rho = 1: sum over n of (1+n)^(-2)
    assert summability_constant(1, 4.0) == pytest.approx(math.pi**2 / 6, rel=1e-8)
