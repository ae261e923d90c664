import math

import numpy as np
import pytest

from lognormal_pce.fem import (
    FemSolution,
    Mesh1D,
    SolverError,
    TridiagonalFactor,
    a_norm,
    assemble_solve,
    critical_constant,
    derivative_recursion,
    dual_norm,
    field_at_midpoints,
    h1_error,
    load_vector,
    make_source,
    pointwise_derivative_bound_batch,
    pointwise_derivative_bound_check,
    residual_norm,
    solve_sample,
    stability_gap,
    taylor_derivatives,
    v_norm,
)
from lognormal_pce.field import FieldSample, constant_system, kl_system, schauder_system, sup_weighted_sum
from lognormal_pce.multiindex import MultiIndex, WeightSequence, fit_rate
from lognormal_pce.rng import gaussians

ONE = make_source(1.0)


def unit(x):
    return np.ones_like(x)


def test_nodal_exactness():
    mesh = Mesh1D(31)
    u = assemble_solve(unit, ONE, mesh)
    x = mesh.nodes
    np.testing.assert_allclose(u.coeffs, x * (1 - x) / 2, atol=1e-14)


def test_zero_source():
    u = assemble_solve(unit, make_source(0.0), Mesh1D(15))
    assert np.all(u.coeffs == 0) and v_norm(u) == 0


def test_norm_examples():
    mesh = Mesh1D(127)
    x = mesh.nodes
    u = FemSolution(x * (1 - x) / 2, mesh)
    assert v_norm(u) ** 2 == pytest.approx(1 / 12, rel=1e-4)
    hat = np.zeros(mesh.m)
    hat[40] = 1.0
    assert v_norm(FemSolution(hat, mesh)) == pytest.approx(math.sqrt(2 / mesh.h))
    assert a_norm(u, unit) == pytest.approx(v_norm(u))
    assert a_norm(u, lambda x: 4 * np.ones_like(x)) == pytest.approx(2 * v_norm(u))


def test_h1_convergence_rate():
    hs, errs = [], []
    for k in range(6, 11):
        mesh = Mesh1D(2**k - 1)
        u = assemble_solve(unit, make_source({"kind": "manufactured_sine"}), mesh)
        hs.append(mesh.h)
        errs.append(h1_error(u, lambda x: math.pi * np.cos(math.pi * x)))
    # fit_rate returns the negated slope against n; use 1/h as n
    rate = fit_rate([1 / h for h in hs], errs)
    assert rate == pytest.approx(1.0, abs=0.1)


def test_residual_and_positivity():
    mesh = Mesh1D(200)
    rng = np.random.default_rng(0)
    a = np.exp(rng.normal(size=mesh.m + 1))
    f = load_vector(mesh, ONE)
    fac = TridiagonalFactor(a, mesh.h)
    assert residual_norm(fac, fac.solve(f), f) <= 1e-12
    with pytest.raises(SolverError):
        TridiagonalFactor(-a, mesh.h)


def test_batched_solve_matches_single():
    mesh = Mesh1D(40)
    rng = np.random.default_rng(1)
    a = np.exp(rng.normal(size=(3, mesh.m + 1)))
    f = load_vector(mesh, ONE)
    batch = TridiagonalFactor(a, mesh.h).solve(f)
    for i in range(3):
        np.testing.assert_allclose(batch[i], TridiagonalFactor(a[i], mesh.h).solve(f), rtol=1e-14)


def test_lax_milgram_and_norm_equivalence():
    mesh = Mesh1D(255)
    sys = schauder_system()
    J = 10
    fstar = dual_norm(ONE, mesh)
    for y in gaussians(3, 0, 40, J):
        s = FieldSample(tuple(y), sys)
        u = solve_sample(s, mesh, ONE)
        bsup = float(np.max(np.abs(s(mesh.sup_points))))
        assert v_norm(u) <= fstar * math.exp(bsup) * (1 + 1e-12)
        a_mid = np.exp(y @ field_at_midpoints(sys, J, mesh))
        an = a_norm(u, lambda x: a_mid)
        assert math.exp(-bsup / 2) * v_norm(u) <= an * (1 + 1e-12)
        assert an <= math.exp(bsup / 2) * v_norm(u) * (1 + 1e-12)


# ---------------------------------------------------------------- derivatives


def test_recursion_zero_order_is_solve():
    mesh = Mesh1D(63)
    s = FieldSample((0.4, -1.0, 0.3), kl_system())
    d = derivative_recursion(s, MultiIndex(), mesh, ONE)
    np.testing.assert_allclose(d[MultiIndex()].coeffs, solve_sample(s, mesh, ONE).coeffs, rtol=1e-14)


def test_constant_psi_derivatives():
    c = 0.5
    mesh = Mesh1D(127)
    s = FieldSample((0.7,), constant_system(c))
    d = derivative_recursion(s, MultiIndex.unit(1, 4), mesh, ONE)
    u = d[MultiIndex()].coeffs
    for k in range(5):
        np.testing.assert_allclose(d[MultiIndex.unit(1, k)].coeffs, (-c) ** k * u, rtol=1e-8)


def test_recursion_against_finite_differences():
    mesh = Mesh1D(127)
    sys = schauder_system()
    J, h = 5, 1e-4
    for y in gaussians(11, 0, 5, J):
        s = FieldSample(tuple(y), sys)
        cap = MultiIndex.from_dense([1] * J)
        d = derivative_recursion(s, cap, mesh, ONE)
        for j in range(J):
            e = np.zeros(J)
            e[j] = h
            up = solve_sample(FieldSample(tuple(y + e), sys), mesh, ONE).coeffs
            dn = solve_sample(FieldSample(tuple(y - e), sys), mesh, ONE).coeffs
            fd = (up - dn) / (2 * h)
            got = d[MultiIndex.unit(j + 1)].coeffs
            assert np.linalg.norm(got - fd) <= 1e-5 * np.linalg.norm(fd)


def test_mixed_derivative_symmetry():
    mesh = Mesh1D(63)
    sys = schauder_system()
    y = np.array([[0.3, -0.8, 1.1]])
    psi = field_at_midpoints(sys, 3, mesh)
    load = load_vector(mesh, ONE)
    mus = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0)]
    W = taylor_derivatives(y, psi, mus, mesh, load)
    # swap coordinates 1 and 2 everywhere: same derivative, computed in the other order
    perm = [1, 0, 2]
    Wp = taylor_derivatives(y[:, perm], psi[perm], mus, mesh, load)
    np.testing.assert_allclose(W[3], Wp[3], rtol=1e-13, atol=1e-13 * np.abs(W[3]).max())
    np.testing.assert_allclose(W[1], Wp[2], rtol=1e-13)


def test_recursion_rejects_non_downward_closed():
    mesh = Mesh1D(15)
    psi = field_at_midpoints(kl_system(), 1, mesh)
    with pytest.raises(ValueError):
        taylor_derivatives(np.zeros((1, 1)), psi, [(0,), (2,)], mesh, load_vector(mesh, ONE))


# ---------------------------------------------------------------- stability and bounds


def test_stability_gap():
    mesh = Mesh1D(127)
    lhs, rhs = stability_gap(unit, unit, ONE, mesh)
    assert lhs == 0
    for eps in (0.1, 0.01):
        lhs, rhs = stability_gap(unit, lambda x: (1 + eps) * np.ones_like(x), ONE, mesh)
        assert 0 < lhs <= rhs
    sys, J = kl_system(), 8
    psi = field_at_midpoints(sys, J, mesh)
    Y = gaussians(21, 0, 200, J)
    for y1, y2 in zip(Y[::2], Y[1::2]):
        a1, a2 = np.exp(y1 @ psi), np.exp(y2 @ psi)
        lhs, rhs = stability_gap(lambda x: a1, lambda x: a2, ONE, mesh)
        assert lhs <= rhs * (1 + 1e-12)


def test_pointwise_bound_zero_field():
    mesh = Mesh1D(63)
    s = FieldSample((0.0, 0.0), constant_system(0.0, 0.0))
    w = WeightSequence("power", 1.0, 0.0, r=2)
    res = pointwise_derivative_bound_check(s, w, 0.0, mesh, ONE)
    u = solve_sample(s, mesh, ONE)
    assert res.lhs == pytest.approx(a_norm(u, unit) ** 2, rel=1e-12)
    assert res.holds


def test_pointwise_bound_constant_closed_form():
    c, rho = 0.5, 1.0
    mesh = Mesh1D(63)
    s = FieldSample((0.3,), constant_system(c))
    w = WeightSequence("list", values=(rho,), r=1)
    K = rho * c
    res = pointwise_derivative_bound_check(s, w, K, mesh, ONE)
    u = solve_sample(s, mesh, ONE)
    an2 = a_norm(u, lambda x: np.exp(0.3 * c) * np.ones_like(x)) ** 2
    assert res.lhs == pytest.approx((1 + rho**2 * c**2) * an2, rel=1e-10)
    delta = K / critical_constant(1)
    assert res.holds == (rho**2 * c**2 <= delta / (1 - delta))
    with pytest.raises(ValueError):
        pointwise_derivative_bound_check(s, w, 0.7, mesh, ONE)


def test_pointwise_bound_schauder_samples():
    mesh = Mesh1D(127)
    sys, J = schauder_system(), 7
    base = WeightSequence("dyadic", 1.0, 0.25, r=2)
    K0 = sup_weighted_sum(sys, base, J).grid_value
    K = 0.9 * critical_constant(2)
    w = base.scaled(K / K0)
    Y = gaussians(5, 0, 10, J)
    lhs, rhs = pointwise_derivative_bound_batch(Y, sys, w, K, mesh, ONE)
    assert np.all(lhs <= rhs * (1 + 1e-12))
    single = pointwise_derivative_bound_check(FieldSample(tuple(Y[0]), sys), w, K, mesh, ONE)
    assert single.lhs == pytest.approx(lhs[0], rel=1e-12)
