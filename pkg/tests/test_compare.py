import copy

from lognormal_pce.cli import DEFAULTS, compare_representations


def test_n1_errors_agree_and_curves_monotone():
    # same Brownian bridge in both representations: the error after keeping u_0
    # agrees up to the dimension-truncation gap; J = 7 keeps that gap below 5%
    cfg = copy.deepcopy(DEFAULTS["compare"])
    cfg.update(J=7, quad_order=5, degree_cap=3, mesh_m=127)
    res = compare_representations(cfg)
    kl, sch = res["curves"]["KL"], res["curves"]["Schauder"]
    assert abs(kl[1] - sch[1]) <= 0.05 * max(kl[1], sch[1])
    for curve in (kl, sch):
        assert curve[0] == 1.0 and curve[-1] == 0.0
        assert all(a >= b for a, b in zip(curve, curve[1:]))
