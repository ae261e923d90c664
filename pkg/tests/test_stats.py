import math

import numpy as np
import pytest
from scipy.stats import norm

from lognormal_pce.fem import Mesh1D, dual_norm, make_source
from lognormal_pce.field import constant_system, schauder_system
from lognormal_pce.parallel import chunk_ranges, ordered_map
from lognormal_pce.rng import gaussians, uniforms
from lognormal_pce.stats import SampleConfig, mc_exp_moment_b, mc_moment_u, sup_norms_b, tail_curve


def test_rng_is_counter_based():
    full = gaussians(42, 0, 1000, 3)
    np.testing.assert_array_equal(full[300:700], gaussians(42, 300, 700, 3))
    assert not np.array_equal(full, gaussians(43, 0, 1000, 3))
    # coordinate j of sample i does not depend on J
    np.testing.assert_array_equal(full[:, :2], gaussians(42, 0, 1000, 2))
    u = uniforms(1, 0, 10000, 2)
    assert 0 < u.min() and u.max() < 1


def test_gaussian_moments():
    N = 100000
    Y = gaussians(5, 0, N, 4)
    assert np.all(np.abs(Y.mean(0)) <= 4 / math.sqrt(N))
    assert np.all(np.abs(Y.var(0) - 1) <= 4 * math.sqrt(2 / N))


def test_chunking():
    assert chunk_ranges(5, 2) == [(0, 2), (2, 4), (4, 5)]
    assert chunk_ranges(0, 3) == []
    assert ordered_map(lambda x: x * x, range(10), threads=4) == [x * x for x in range(10)]


def test_exp_moment_zero_k():
    cfg = SampleConfig(0, 100, 3, schauder_system())
    assert tuple(mc_exp_moment_b(cfg, 0.0)) == (1.0, 0.0)
    assert mc_moment_u(cfg, 0.0).estimate == 1.0
    with pytest.raises(ValueError):
        mc_exp_moment_b(cfg, -1.0)


def test_exp_moment_closed_form():
    c, k = 0.5, 1.0
    cfg = SampleConfig(3, 20000, 1, constant_system(c))
    est, se = mc_exp_moment_b(cfg, k)
    exact = 2 * math.exp(k * k * c * c / 2) * norm.cdf(k * c)
    assert abs(est - exact) <= 3 * se
    assert est <= math.exp(k * k * c * c / 2 + 2 * k * c / math.sqrt(2 * math.pi))


def test_moment_u_zero_field():
    mesh = Mesh1D(63)
    cfg = SampleConfig(1, 50, 2, constant_system(0.0, 0.0), mesh=mesh)
    res = mc_moment_u(cfg, 3.0)
    assert res.estimate == pytest.approx(dual_norm(make_source(1.0), mesh) ** 3, rel=1e-12)
    assert res.std_error == pytest.approx(0.0, abs=1e-15)


def test_lax_milgram_samplewise():
    cfg = SampleConfig(2, 2000, 10, schauder_system(), mesh=Mesh1D(127))
    assert mc_moment_u(cfg, 2.0).bound_violations == 0


def test_tail_curve_shape():
    cfg = SampleConfig(4, 5000, 15, schauder_system(), grid_n=513)
    curve = tail_curve(cfg, [0.0, 0.5, 1.0, 1.5])
    assert curve.P[0] == pytest.approx(1.0)
    assert np.all(np.diff(curve.P) <= 0)
    assert curve.slope() < 0
    assert len(curve.rows()) == 4


def test_reproducible_and_thread_independent():
    base = dict(seed=9, N=5000, J=6, system=schauder_system(), mesh=Mesh1D(63), grid_n=257)
    serial = SampleConfig(**base, threads=1)
    par = SampleConfig(**base, threads=3)
    assert np.array_equal(sup_norms_b(serial), sup_norms_b(par))
    assert tuple(mc_exp_moment_b(serial, 1.5)) == tuple(mc_exp_moment_b(serial, 1.5))
    assert tuple(mc_exp_moment_b(serial, 1.5)) == tuple(mc_exp_moment_b(par, 1.5))
    assert tuple(mc_moment_u(serial, 2.0)) == tuple(mc_moment_u(par, 2.0))
    ts = [0.5, 1.0]
    assert np.array_equal(tail_curve(serial, ts).P, tail_curve(par, ts).P)
