import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracsemi.barriers import build_barriers
from fracsemi.errors import ConfigurationError, UsageError
from fracsemi.mesh import make_grid
from fracsemi.semipositone import monotone_iterate, uncut_residual
from fracsemi.variational import (boundary_bound, choose_rho_mu, cutoff_eval, energy,
                                  energy_gradient, growth_constants, lower_bound,
                                  make_nonlinearity, minimize_in_ball, mountain_pass, mu0_formula,
                                  verify_solution)

S, Q, R = 0.25, 0.5, 2.0


@pytest.fixture(scope="module")
def nl0(under512, lam2):
    return make_nonlinearity(lam2, 0.0, Q, R, S, under512)


@pytest.fixture(scope="module")
def thresholds(nl0, op512):
    return choose_rho_mu(nl0, op512)


@pytest.fixture(scope="module")
def nl_half(nl0, thresholds):
    return nl0.with_mu(0.5 * thresholds.mu_lambda)


@pytest.fixture(scope="module")
def minimizer(nl_half, op512, thresholds, eig512):
    return minimize_in_ball(nl_half, op512, thresholds.rho, tol=1e-10, eig=eig512)


@pytest.fixture(scope="module")
def saddle(nl_half, op512, thresholds, eig512, minimizer):
    return mountain_pass(nl_half, op512, minimizer.solution, thresholds.rho, tol=1e-8, eig=eig512)


def small_nl(amplitude=1.0, n=64, mu=0.3, lam=2.0, r=R):
    g = make_grid(-1, 1, n)
    return make_nonlinearity(lam, mu, Q, r, S, g.sample(lambda x: amplitude * (1 - x**2) + 1e-3))


# cut-off algebra

def test_lower_branch_values():
    nl = small_nl()
    ub = nl.u_under.values[5]
    assert cutoff_eval(nl, 5, -3.0, "g") == pytest.approx(ub**Q - 1, rel=1e-15)
    assert cutoff_eval(nl, 5, -3.0, "f") == pytest.approx(ub**R, rel=1e-15)


def test_knot_continuity():
    nl = small_nl()
    for i in range(nl.u_under.grid.n):
        ub = nl.u_under.values[i]
        for kind in "fgFG":
            below = cutoff_eval(nl, i, ub, kind)
            above = cutoff_eval(nl, i, np.nextafter(ub, np.inf), kind)
            assert abs(below - above) < 1e-12
        assert cutoff_eval(nl, i, ub, "F") == pytest.approx(ub ** (R + 1), rel=1e-14)


def test_G_vanishes_at_zero():
    nl = small_nl()
    assert all(cutoff_eval(nl, i, 0.0, "G") == 0.0 for i in range(nl.u_under.grid.n))


def test_cutoff_eval_usage():
    nl = small_nl()
    with pytest.raises(UsageError):
        cutoff_eval(nl, 0, 1.0, "h")
    with pytest.raises(UsageError):
        cutoff_eval(nl, 64, 1.0, "f")


def test_primitives_differentiate_to_nonlinearities():
    nl = small_nl(amplitude=2.0)
    for i in (0, 7, 31, 50):
        ub = nl.u_under.values[i]
        for t in np.r_[np.linspace(-3, 5, 10) + 0.0123, ub * 0.5, ub * 1.5]:
            eps = 1e-6 * max(1.0, abs(t))
            for prim, der in (("F", "f"), ("G", "g")):
                fd = (cutoff_eval(nl, i, t + eps, prim) - cutoff_eval(nl, i, t - eps, prim)) / (2 * eps)
                assert fd == pytest.approx(cutoff_eval(nl, i, t, der), rel=1e-6, abs=1e-8)


@settings(max_examples=200, deadline=None)
@given(node=st.integers(0, 63), a=st.floats(-1e3, 1e3), b=st.floats(-1e3, 1e3))
def test_f_g_nondecreasing(node, a, b):
    nl = small_nl(amplitude=3.0)
    lo, hi = min(a, b), max(a, b)
    for kind in "fg":
        assert cutoff_eval(nl, node, lo, kind) <= cutoff_eval(nl, node, hi, kind)


@pytest.mark.parametrize("amplitude", [0.01, 1.0, 35.0])
def test_growth_bounds_on_lattice(amplitude):
    nl = small_nl(amplitude=amplitude)
    c, cp = nl.growth_c, nl.growth_cprime
    ts = np.r_[np.linspace(-1e3, 1e3, 401), np.linspace(-2 * amplitude, 2 * amplitude, 101), 0.0]
    for i in range(nl.u_under.grid.n):
        for t in ts:
            F = abs(cutoff_eval(nl, i, t, "F"))
            G = abs(cutoff_eval(nl, i, t, "G"))
            slack = 1e-12 * max(1.0, abs(t) ** (R + 1))
            assert F <= c + cp * abs(t) + abs(t) ** (R + 1) / (R + 1) + slack
            assert G <= c + cp * abs(t) + abs(t) ** (Q + 1) / (Q + 1) + slack


def test_halving_cprime_breaks_bound():
    # with a small subsolution c' comes from the G-branch and is tight near t = 0-
    nl = small_nl(amplitude=0.01)
    c, cp = growth_constants(nl.u_under, Q, R)
    half = 0.5 * cp
    broken = False
    for i in range(nl.u_under.grid.n):
        for t in np.linspace(-1.0, 1.0, 201):
            G = abs(cutoff_eval(nl, i, t, "G"))
            if G > c + half * abs(t) + abs(t) ** (Q + 1) / (Q + 1):
                broken = True
    assert broken


def test_rejects_supercritical_and_bad_cutoff():
    with pytest.raises(ConfigurationError, match="supercritical"):
        small_nl(r=5.0)
    g = make_grid(-1, 1, 16)
    with pytest.raises(ConfigurationError):
        make_nonlinearity(1.0, 0.0, Q, R, S, g.zeros())


# energy and gradient

def test_energy_zero(nl_half, op512):
    assert energy(nl_half, op512, op512.grid.zeros()) == 0.0


def test_lower_bound_holds(nl_half, op512, rng):
    g = op512.grid
    for k in range(50):
        u = g.field(rng.standard_normal(g.n) * 10.0 ** rng.uniform(-2, 3))
        assert energy(nl_half, op512, u) >= lower_bound(nl_half, op512, u)


def test_descent_step_decreases_energy(nl_half, op512, rng):
    g = op512.grid
    u = g.field(rng.random(g.n) * 50)
    grad = energy_gradient(nl_half, op512, u)
    e0 = energy(nl_half, op512, u)
    step = 1.0
    while energy(nl_half, op512, u - grad * step) > e0 - 1e-4 * step * float(grad.values @ grad.values):
        step *= 0.5
        assert step > 1e-20
    assert energy(nl_half, op512, u - grad * step) < e0


def test_gradient_finite_differences(nl_half, op512, rng):
    g = op512.grid
    for _ in range(20):
        u = g.field(rng.random(g.n) * 60)
        v = g.field(rng.standard_normal(g.n))
        eps = 1e-6 * max(u.sup_norm(), 1.0)
        fd = (energy(nl_half, op512, u + v * eps) - energy(nl_half, op512, u - v * eps)) / (2 * eps)
        exact = float(energy_gradient(nl_half, op512, u).values @ v.values)
        assert abs(fd - exact) / abs(exact) < 1e-5


def test_gradient_quadratic_part(nl_half, op512, rng):
    clone = nl_half.with_params(0.0, 0.0)
    u = op512.grid.field(rng.standard_normal(op512.n))
    grad = energy_gradient(clone, op512, u).values
    assert np.allclose(grad, op512.grid.h * op512.matvec_direct(u.values), rtol=1e-14, atol=0)


def test_gradient_vanishes_at_monotone_limit(op512, eig512, lam2, nl0):
    bs = build_barriers(op512, eig512, lam2, Q, 1.5)
    tol = 1e-8
    rep = monotone_iterate(op512, lam2, 0.0, Q, 1.0, bs.u_under, bs.z_super, "ascend", tol=tol)
    assert energy_gradient(nl0, op512, rep.solution).sup_norm() < 10 * tol


def test_cutoff_inactive_above_subsolution(nl_half, op512, rng):
    u = nl_half.u_under + op512.grid.field(rng.random(op512.n) * 5)
    grad = energy_gradient(nl_half, op512, u).values
    res = uncut_residual(op512, u, nl_half.lam, nl_half.mu, Q, R).values
    assert np.allclose(grad, op512.grid.h * res, rtol=1e-13, atol=1e-13 * np.abs(grad).max())


def test_grid_mismatch(nl_half):
    from fracsemi.fraclap import assemble
    with pytest.raises(UsageError):
        energy(nl_half, assemble(make_grid(-1, 1, 100), S), make_grid(-1, 1, 100).zeros())


# thresholds

def test_mu_lambda_definition(nl0, op512, thresholds):
    embeds = (thresholds.embed_1, thresholds.embed_q1, thresholds.embed_r1)
    meas = op512.grid.measure
    assert boundary_bound(nl0, meas, embeds, thresholds.rho, 0.5 * thresholds.mu_lambda) > 0
    assert boundary_bound(nl0, meas, embeds, thresholds.rho, 2.0 * thresholds.mu_lambda) <= 0
    assert thresholds.mu_free_margin >= 0.1 * 0.5 * thresholds.rho**2


def test_boundary_bound_positive_below_mu_lambda(nl_half, op512, thresholds):
    rep = choose_rho_mu(nl_half, op512, embeds={1.0: thresholds.embed_1, 1.5: thresholds.embed_q1,
                                                3.0: thresholds.embed_r1, 4.0: thresholds.embed_crit})
    assert rep.boundary_inf_bound > 0
    assert rep.rho == thresholds.rho


def test_rho_is_smallest_on_ladder(nl0, op512, thresholds):
    from fracsemi.variational import _mu_free_part
    r = thresholds.rho / 2**0.25
    part = _mu_free_part(nl0, op512.grid.measure, thresholds.embed_1, thresholds.embed_q1, r)
    assert part < 0.1 * 0.5 * r**2


def test_mu0_scaling_and_hand_value(thresholds):
    S4 = thresholds.embed_crit
    rho = thresholds.rho
    assert thresholds.mu0_critical == pytest.approx(1.0 / (4.0 * S4**4 * rho**2), rel=1e-12)
    crit = 4.0
    assert mu0_formula(crit, S4, 2 * rho) / mu0_formula(crit, S4, rho) == pytest.approx(
        2.0 ** (2 - crit), rel=1e-14)
    crit = 2 / (1 - 2 * 0.3)
    assert mu0_formula(crit, 1.3, 2 * rho) / mu0_formula(crit, 1.3, rho) == pytest.approx(
        2.0 ** (2 - crit), rel=1e-13)


# critical points

def test_minimizer_certificates(minimizer, nl_half, op512):
    assert minimizer.energy <= 0
    assert minimizer.diagnostics["gradient_sup"] < 1e-10
    assert not minimizer.diagnostics["boundary_contact"]
    u = minimizer.solution.values
    assert np.all(u >= nl_half.u_under.values - 1e-8) and u.min() > 0
    assert minimizer.residual_inf < 10 * 1e-10 / op512.grid.h


def test_minimizer_warns_above_threshold(nl0, op512, thresholds, eig512):
    nl = nl0.with_mu(2 * thresholds.mu_lambda)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        minimize_in_ball(nl, op512, thresholds.rho, tol=1e-8, eig=eig512,
                         mu_lambda=thresholds.mu_lambda)
    assert any("threshold" in str(x.message) for x in w)


def test_mountain_pass_certificates(saddle, minimizer, nl_half, op512):
    d = saddle.diagnostics
    assert saddle.energy > 0 >= minimizer.energy
    assert d["gradient_sup"] < 1e-8
    assert d["morse_index"] == 1
    assert not d["merged"] and d["separation"] > d["sep_min"]
    u = saddle.solution.values
    assert np.all(u >= nl_half.u_under.values - 1e-8)
    res = uncut_residual(op512, saddle.solution, nl_half.lam, nl_half.mu, Q, R)
    assert res.sup_norm() < 10 * 1e-8 / op512.grid.h


def test_mountain_pass_max_never_increases(saddle):
    trace = np.array(saddle.diagnostics["path"].max_trace)
    assert np.all(np.diff(trace) <= 0)
    assert saddle.energy <= saddle.diagnostics["path_max"] * (1 + 1e-12)


def test_path_endpoints(saddle, nl_half, op512, eig512):
    path = saddle.diagnostics["path"]
    assert path.points[0].sup_norm() == 0.0
    end = path.points[-1]
    assert np.array_equal(end.values, path.t0 * eig512.phi1.values)
    assert energy(nl_half, op512, end) < 0
    assert np.log2(path.t0) == int(np.log2(path.t0))


def test_mountain_pass_rejects_critical(op512, under512, lam2, thresholds, minimizer):
    nl = make_nonlinearity(lam2, 1e-16, Q, 3.0, S, under512)
    with pytest.raises(ConfigurationError, match="critical"):
        mountain_pass(nl, op512, minimizer.solution, thresholds.rho)


# verification

def test_verify_zero_fails(nl_half, op512):
    chk = verify_solution(nl_half, op512, op512.grid.zeros())
    assert not chk.passed
    assert chk.uncut_residual_inf == pytest.approx(nl_half.lam, rel=1e-15)


def test_verify_monotone_limit_passes(op512, eig512, lam2, nl0):
    bs = build_barriers(op512, eig512, lam2, Q, 1.5)
    rep = monotone_iterate(op512, lam2, 0.0, Q, 1.0, bs.u_under, bs.z_super, "ascend", tol=1e-8)
    chk = verify_solution(nl0, op512, rep.solution)
    assert chk.passed and chk.ordering_ok and chk.decay_ok


def test_verify_perturbation_raises_residual(minimizer, nl_half, op512):
    base = verify_solution(nl_half, op512, minimizer.solution)
    bump = np.zeros(op512.n)
    bump[200] = 0.1
    pert = verify_solution(nl_half, op512, minimizer.solution + op512.grid.field(bump))
    # the perturbed row sees at least the diagonal defect minus the local nonlinearity change
    assert pert.uncut_residual_inf > base.uncut_residual_inf
    assert pert.uncut_residual_inf >= 0.1 * op512.diag[0] - 0.1 * nl_half.mu * 2 * minimizer.solution.max() - 1.0


def test_check_report_json(minimizer, nl_half, op512):
    doc = verify_solution(nl_half, op512, minimizer.solution).to_json()
    assert {"uncut_residual_inf", "cutoff_residual_inf", "min_value", "ordering_ok",
            "decay_exponent", "energy"} <= set(doc)
