import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracsemi.barriers import build_barriers, subsolution, subsolution_threshold, torsion
from fracsemi.errors import ConfigurationError, MonotonicityError, UsageError
from fracsemi.fraclap import assemble
from fracsemi.mesh import make_grid
from fracsemi.semipositone import (SolveReport, estimate_lambda0, lambda0_detector,
                                   largest_certified_mu, monotone_iterate, supersolution_mu,
                                   uncut_residual, uncut_rhs)
from fracsemi.spectral import principal_eigenpair

S, Q = 0.25, 0.5


@pytest.fixture(scope="module")
def ascend512(op512, eig512, lam2):
    bs = build_barriers(op512, eig512, lam2, Q, 1.5)
    return bs, monotone_iterate(op512, lam2, 0.0, Q, 1.0, bs.u_under, bs.z_super, "ascend",
                                tol=1e-8)


@pytest.fixture(scope="module")
def bracket256():
    return estimate_lambda0(assemble(make_grid(-1, 1, 256), S), Q)


def test_ascend_contract(ascend512):
    bs, rep = ascend512
    u = rep.solution.values
    assert rep.converged and rep.residual_inf < 1e-8
    assert np.all(u >= bs.u_under.values) and np.all(u <= bs.z_super.values)
    assert rep.ordering_ok and rep.min_value > 0
    assert 0.7 * S <= rep.decay_exponent <= 1.3 * S


def test_descend_matches_ascend(op512, lam2, ascend512):
    bs, up = ascend512
    down = monotone_iterate(op512, lam2, 0.0, Q, 1.0, bs.u_under, bs.z_super, "descend", tol=1e-8)
    assert down.converged
    assert np.max(np.abs(down.solution.values - up.solution.values)) < 1e-6


def test_ascend_below_descend_coarse():
    op = assemble(make_grid(-1, 1, 128), S)
    eig = principal_eigenpair(op)
    lam = 2 * subsolution_threshold(op, eig, Q, 1.5).lambda_star
    bs = build_barriers(op, eig, lam, Q, 1.5)
    a = monotone_iterate(op, lam, 0.0, Q, 1.0, bs.u_under, bs.z_super, "ascend", tol=1e-10)
    d = monotone_iterate(op, lam, 0.0, Q, 1.0, bs.u_under, bs.z_super, "descend", tol=1e-10)
    assert np.all(a.solution.values <= d.solution.values + 1e-9)


def test_small_mu_continuity(op512, eig512, lam2, ascend512):
    _, base = ascend512
    alpha2 = 2.5
    upper, margin = supersolution_mu(op512, lam2, 1e-4, Q, 2.0, alpha2)
    assert margin >= 0
    under = subsolution(eig512, lam2, 1.5, Q)
    rep = monotone_iterate(op512, lam2, 1e-4, Q, 2.0, under, upper, "ascend", tol=1e-8)
    assert rep.converged and rep.ordering_ok
    assert np.max(np.abs(rep.solution.values - base.solution.values)) < 1e-2


def test_small_mu_perturbation_is_linear(op512, eig512, lam2, ascend512):
    # first-order continuity: the shift of the limit is proportional to mu
    _, base = ascend512
    under = subsolution(eig512, lam2, 1.5, Q)
    shifts = []
    for mu in (1e-6, 1e-5):
        upper, margin = supersolution_mu(op512, lam2, mu, Q, 2.0, 2.5)
        assert margin >= 0
        rep = monotone_iterate(op512, lam2, mu, Q, 2.0, under, upper, "ascend", tol=1e-10)
        shifts.append(np.max(np.abs(rep.solution.values - base.solution.values)) / mu)
    assert shifts[1] == pytest.approx(shifts[0], rel=0.05)


def test_supersolution_margins(op512, lam2):
    psi = torsion(op512)
    m = [supersolution_mu(op512, lam2, mu, Q, 2.0, 2.5, psi)[1] for mu in (0.0, 1e-5, 1e-4)]
    assert m[0] >= 0
    assert m[0] > m[1] > m[2]


def test_largest_certified_mu_is_sharp(op512, lam2):
    psi = torsion(op512)
    mu_max = largest_certified_mu(op512, lam2, Q, 2.0, 2.5, psi)
    assert mu_max > 0
    assert supersolution_mu(op512, lam2, 0.999 * mu_max, Q, 2.0, 2.5, psi)[1] >= 0
    assert supersolution_mu(op512, lam2, 1.001 * mu_max, Q, 2.0, 2.5, psi)[1] < 0


def test_alpha2_range(op512):
    with pytest.raises(ConfigurationError):
        supersolution_mu(op512, 10.0, 0.0, Q, 2.0, 1.9)


def test_wrong_start_trips_monotonicity(op512, eig512, lam2, ascend512):
    bs, _ = ascend512
    # starting an ascent at a strict supersolution must move down at some node
    with pytest.raises(MonotonicityError):
        monotone_iterate(op512, lam2, 0.0, Q, 1.0, bs.z_super, bs.z_super * 2.0, "ascend")


def test_barriers_must_be_ordered(op512, ascend512, lam2):
    bs, _ = ascend512
    with pytest.raises(ConfigurationError):
        monotone_iterate(op512, lam2, 0.0, Q, 1.0, bs.z_super, bs.u_under, "ascend")
    with pytest.raises(UsageError):
        monotone_iterate(op512, lam2, 0.0, Q, 1.0, None, bs.z_super, "ascend")


def test_descend_below_lambda0_reports_nonpositive(z1_512, op512):
    ok, rep = lambda0_detector(op512, 0.5, Q, z1_512)
    assert not ok and rep.min_value <= 0 and not rep.ordering_ok


def test_lambda0_bracket(bracket256):
    b = bracket256
    assert b.rel_width <= 0.05
    assert not b.detector_lo and b.detector_hi
    op = assemble(make_grid(-1, 1, 256), S)
    from fracsemi.barriers import solve_sublinear
    z1 = solve_sublinear(op, 1.0, Q, tol=1e-13)
    assert not lambda0_detector(op, 0.5 * b.lambda_lo, Q, z1)[0]
    assert lambda0_detector(op, 1.5 * b.lambda_hi, Q, z1)[0]


def test_lambda0_trace_monotone(bracket256):
    trace = sorted((lam, ok) for lam, ok, *_ in bracket256.trace)
    seen_true = False
    for _, ok in trace:
        if seen_true:
            assert ok
        seen_true = seen_true or ok


def test_lambda0_rerun_bit_identical(bracket256):
    again = estimate_lambda0(assemble(make_grid(-1, 1, 256), S), Q)
    assert (again.lambda_lo, again.lambda_hi) == (bracket256.lambda_lo, bracket256.lambda_hi)


def test_lambda0_rejects_low_cap():
    with pytest.raises(Exception, match="cap"):
        estimate_lambda0(assemble(make_grid(-1, 1, 64), S), Q, cap=1.0)


def test_residual_of_zero_is_lambda(op512):
    res = uncut_residual(op512, op512.grid.zeros(), 3.0, 0.1, Q, 2.0)
    assert np.all(res.values == 3.0)


def test_report_json(ascend512):
    _, rep = ascend512
    doc = json.loads(rep.dumps("solution_0.csv"))
    assert set(doc) == {"solution_csv_path", "residual_inf", "iterations", "converged",
                        "classification", "ordering_ok", "min_value", "decay_exponent",
                        "energy", "params"}
    assert doc["classification"] == "monotone-limit"


def test_report_rejects_unknown_classification(ascend512):
    _, rep = ascend512
    with pytest.raises(UsageError):
        SolveReport(rep.solution, 0.0, 1, True, "saddle", True, 1.0, 0.25, 1e-8)


@settings(max_examples=100, deadline=None)
@given(a=st.floats(-10, 1e3), b=st.floats(-10, 1e3), lam=st.floats(0.01, 100),
       mu=st.floats(0, 1), q=st.floats(0.05, 0.95), r=st.floats(1.01, 5))
def test_rhs_nondecreasing(a, b, lam, mu, q, r):
    lo, hi = min(a, b), max(a, b)
    f = uncut_rhs(np.array([lo, hi]), lam, mu, q, r)
    assert f[0] <= f[1]
