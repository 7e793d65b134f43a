import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from coldwave import expr as ex
from coldwave import reductions as rd
from coldwave.characteristics import integrate, rhs_rel, rhs_rel_extended
from coldwave.core import DerivativeState, FieldState, SimConfig, ValidationError, make_initial_data


def closed_form_p2(K2, B0):
    """Turning points for K1 = 0: R is quadratic in u = eta**2."""
    b = 2 * B0**2 * K2 + 4 * B0**4
    c = B0**4 * (K2**2 - 4)
    return math.sqrt((b - math.sqrt(b * b - 4 * c)) / 2)


def small_state(eps):
    g = 1.0 + 0.5 * eps * eps
    return FieldState(0.0, 0.0, math.sqrt(g * g - 1.0), 0.0, 0.0)


# --- turning points and periods ----------------------------------------------------


@pytest.mark.parametrize("B0", [0.5, 1.0, 2.0])
def test_turning_points_closed_form(B0):
    tp = rd.turning_points(0.0, 2.01, B0, 0.0)
    p = closed_form_p2(2.01, B0)
    assert tp.p2_minus == pytest.approx(-p, abs=1e-12)
    assert tp.p2_plus == pytest.approx(p, abs=1e-12)
    assert rd.radicand(tp.p2_plus, 0.0, 2.01, B0) == pytest.approx(0.0, abs=1e-12)


def test_turning_points_errors_and_degenerate():
    with pytest.raises(rd.NoBracketingRoots):
        rd.turning_points(0.0, 2.01, 1.0, 5.0)
    with pytest.raises(ValidationError):
        rd.turning_points(0.0, 2.01, 0.0, 0.0)
    tp = rd.turning_points(0.0, 2.0, 1.0, 0.0)
    assert tp.degenerate and tp.p2_minus == pytest.approx(0.0, abs=1e-7)


@pytest.mark.parametrize("B0", [0.5, 1.0, 3.0])
def test_degenerate_period_is_linear_period(B0):
    assert rd.period(0.0, 2.0, B0, 0.0) == pytest.approx(2 * math.pi / math.sqrt(1 + B0 * B0), rel=1e-12)


@pytest.mark.parametrize("B0", [0.5, 1.0, 2.0])
def test_period_matches_return_map(B0):
    st_ = small_state(0.1)
    fi = (st_.P2 - B0 * st_.E1, 2 * st_.gamma + st_.E1**2)
    assert rd.period(*fi, B0, 0.0) == pytest.approx(rd.return_map_period(st_, B0), rel=1e-10)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(0.01, 0.3), st.floats(-0.2, 0.2))
def test_period_return_map_property(B0, P1, E1):
    s = FieldState(0.0, 0.0, P1, B0 * E1 + 0.05, E1)
    K1, K2 = s.P2 - B0 * s.E1, 2 * s.gamma + s.E1**2
    assert rd.period(K1, K2, B0, s.P2) == pytest.approx(rd.return_map_period(s, B0), rel=1e-8)


def test_scalar_equation_matches_characteristic_rate():
    s = FieldState(0.0, 0.0, 0.08, 0.03, -0.02)
    B0 = 1.4
    K1, K2 = s.P2 - B0 * s.E1, 2 * s.gamma + s.E1**2
    assert rd.p2_scalar_rhs(s.P2, K1, K2, B0, 1) == pytest.approx(rhs_rel(s, B0)[1], rel=1e-12)
    with pytest.raises(rd.DomainError):
        rd.p2_scalar_rhs(1.0, K1, K2, B0)


def test_phase_route_matches_full_integration():
    s = small_state(0.1)
    B0 = 1.0
    K2 = 2 * s.gamma
    th = np.linspace(0.0, 5 * rd.period(0.0, K2, B0, 0.0), 157)
    p2, branch = rd.integrate_p2(0.0, K2, B0, 0.0, 1, th)
    tr = integrate("relativistic", [s.P1, 0, 0, 0, 0, 0, 0], SimConfig(B0=B0, horizon=th[-1], rel_tol=1e-12,
                                                                        abs_tol=1e-14), t_eval=th)
    assert np.max(np.abs(p2 - tr.eval_states[:, 1])) < 1e-9
    # branch is the sign of dP2/dtheta = B0 V1
    moving = np.abs(tr.eval_states[:, 0]) > 1e-3
    assert np.array_equal(branch[moving], np.sign(tr.eval_states[moving, 0]).astype(int))


def test_period_b0_zero_orbit():
    s = FieldState(0.0, 0.0, 0.3, 0.2, 0.1)
    orb = rd.PeriodicOrbit(s, 0.0)
    tr = integrate("relativistic", [0.3, 0.2, 0.1, 0, 0, 0, 0],
                   SimConfig(B0=0.0, horizon=4 * orb.period, rel_tol=1e-12, abs_tol=1e-14))
    up = tr.crossings("E1", 0.1, direction=+1)
    assert np.mean(np.diff(up)) == pytest.approx(orb.period, rel=1e-10)


# --- traveling waves ---------------------------------------------------------------


def test_traveling_wave_periodic_profile():
    tw = rd.traveling_wave(10.0, 0.0, 2.01, 1.0, (0.0, 60.0), 0.0, 1)
    assert tw.terminated_at is None
    assert tw.wavelength == pytest.approx(10.0 * rd.period(0.0, 2.01, 1.0, 0.0), rel=1e-12)
    assert tw.residual < 1e-8
    P1, P2, E1 = tw.sample(np.array([0.0, tw.wavelength, 0.37 * tw.wavelength]))
    assert P2[0] == pytest.approx(P2[1], abs=1e-9)
    assert P1[0] == pytest.approx(P1[1], abs=1e-9)
    # the integrals hold along the profile
    assert np.allclose(P2 - E1, 0.0, atol=1e-14)
    assert np.allclose(2 * np.sqrt(1 + P1**2 + P2**2) + E1**2, 2.01, atol=1e-9)


def test_slow_traveling_wave_terminates():
    tw = rd.traveling_wave(0.01, 0.0, 2.01, 1.0, (0.0, 60.0), 0.0, 1)
    assert tw.terminated_at is not None and 0 < tw.terminated_at < 1
    assert tw.wavelength is None
    P, p1 = tw.profile[-1], tw.P1[-1]
    assert p1 - 0.01 * math.sqrt(1 + p1 * p1 + P * P) == pytest.approx(0.0, abs=1e-8)
    with pytest.raises(rd.DomainError):
        tw.sample(0.0)


def test_traveling_wave_rejects_bad_data():
    with pytest.raises(rd.DomainError):
        rd.traveling_wave(1.0, 0.0, 2.01, 1.0, (0.0, 1.0), 0.5)
    with pytest.raises(ValidationError):
        rd.traveling_wave(1.0, 0.0, 2.01, 1.0, (1.0, 2.0), 0.0)


# --- constant-K2 linear equation ------------------------------------------------------


def k2_data(B0, Q, eps, alpha=0.5):
    w = math.sqrt(1 + B0 * B0)
    e_t = (Q + 2 * B0 * B0 + 1) / (2 * (1 + B0 * B0))
    k = w * e_t / (alpha * eps)
    E1 = ex.wave(alpha * eps / w, k)
    return make_initial_data("constant-k2", B0=B0, domain_length=2 * math.pi / k, P2=ex.Const(B0) * E1, E1=E1,
                             K2=2 + eps * eps)


def test_printed_and_derived_coefficients_agree_only_at_unit_field():
    s = FieldState(0.0, 0.0, 0.05, 0.02, 0.03)
    K2 = 2 * s.gamma + s.E1**2
    a = rd.constant_k2_coefficients(s, K2, 0.7, 1.0, 1, "printed")
    b = rd.constant_k2_coefficients(s, K2, 0.7, 1.0, 1, "derived")
    assert a == pytest.approx(b, rel=1e-14)
    a = rd.constant_k2_coefficients(s, K2, 0.7, 2.0, 1, "printed")
    b = rd.constant_k2_coefficients(s, K2, 0.7, 2.0, 1, "derived")
    assert a[0] == b[0] and a[1] != pytest.approx(b[1], rel=1e-3)


def test_derived_linear_equation_reproduces_derivative_system():
    B0 = 0.5
    d = k2_data(B0, -0.3, 0.05)
    y0 = d.initial_vector(0.0)
    T = 2 * math.pi / math.sqrt(1 + B0 * B0)
    th = np.linspace(0.0, 3 * T, 31)
    ls = rd.solve_constant_k2(y0, B0, 3 * T, variant="derived", t_eval=th)
    tr = integrate("relativistic", y0, SimConfig(B0=B0, horizon=3 * T, rel_tol=1e-12, abs_tol=1e-14), t_eval=th)
    yref = 1.0 / (tr.eval_states[:, 5] - B0)
    assert np.max(np.abs(ls.y - yref)) < 1e-5 * np.max(np.abs(yref))
    assert ls.breaking_time is None
    assert np.allclose(ls.residues, 1.0, atol=1e-12)


@pytest.mark.parametrize("B0", [0.5, 2.0])
def test_printed_linear_equation_hits_nonremovable_pole(B0):
    y0 = k2_data(B0, -0.3, 0.05).initial_vector(0.0)
    with pytest.raises(rd.PoleCrossing) as info:
        rd.solve_constant_k2(y0, B0, 10.0, variant="printed")
    assert abs(info.value.residue - 1.0) > 0.1


def test_linear_equation_breaking_matches_characteristic():
    B0 = 2.0
    y0 = k2_data(B0, 0.3, 0.05).initial_vector(0.0)
    ls = rd.solve_constant_k2(y0, B0, 10.0, variant="derived")
    tr = integrate("relativistic", y0, SimConfig(B0=B0, horizon=10.0))
    assert ls.breaking_time is not None and tr.blowup_estimate is not None
    assert ls.breaking_time == pytest.approx(tr.blowup_estimate, abs=1e-4)


def test_zero_order_solution_is_second_order_accurate():
    B0 = 0.5
    errs = {}
    for eps in (0.01, 0.05):
        y0 = k2_data(B0, -0.3, eps).initial_vector(0.0)
        T = 2 * math.pi / math.sqrt(1 + B0 * B0)
        th = np.linspace(0.0, 2 * T, 41)
        tr = integrate("relativistic", y0, SimConfig(B0=B0, horizon=2 * T, rel_tol=1e-12, abs_tol=1e-14),
                       t_eval=th)
        yref = 1.0 / (tr.eval_states[:, 5] - B0)
        C1 = (y0[5] - B0) / (y0[6] - 1.0)
        scale = np.max(np.abs(yref))
        errs[eps] = np.max(np.abs(rd.zero_order_y(th, yref[0], C1, B0) - yref)) / scale
        with np.errstate(invalid="ignore"):
            printed = rd.zero_order_y(th, yref[0], C1, B0, form="printed")
        assert np.nanmax(np.abs(printed - yref)) / scale > 0.05
    assert errs[0.01] < 1e-3
    assert 15 < errs[0.05] / errs[0.01] < 40


# --- u, lambda, sigma and eta forms ----------------------------------------------------

vals = st.floats(-0.8, 0.8, allow_nan=False)


def rates(P1, P2, E1, p1, p2, e, B0):
    s = FieldState(0.0, 0.0, P1, P2, E1)
    return s, rhs_rel_extended(s, DerivativeState(p1, p2, e), B0)


@settings(max_examples=50)
@given(vals, vals, vals, vals, vals, vals, st.floats(0.0, 3.0))
def test_ulam_rates_follow_from_derivative_system(P1, P2, E1, p1, p2, e, B0):
    assume(abs(p1) > 0.1 and abs(e - 1) > 0.1)
    s, (dp1, dp2, de) = rates(P1, P2, E1, p1, p2, e, B0)
    u, lam, sig = rd.ulam_from_derivatives(p1, p2, e)
    du, dlam, dsig = rd.ulam_rhs(u, lam, sig, s, B0)
    assert du == pytest.approx((de * p1 - e * dp1) / p1**2, rel=1e-9, abs=1e-9)
    assert dlam == pytest.approx((de * p1 - (e - 1) * dp1) / p1**2, rel=1e-9, abs=1e-9)
    assert dsig == pytest.approx((dp2 * p1 - p2 * dp1) / p1**2, rel=1e-9, abs=1e-9)
    C1 = (p2 - B0) / (e - 1)
    du2, dlam2 = rd.ulam_reduced_rhs(u, lam, s, C1, B0)
    assert (du2, dlam2) == pytest.approx((du, dlam), rel=1e-9, abs=1e-9)
    assert rd.derivatives_from_ulam(u, lam, C1, B0) == pytest.approx((p1, p2, e), rel=1e-9, abs=1e-12)


@settings(max_examples=50)
@given(vals, vals, vals, vals, vals, vals, st.floats(0.0, 3.0))
def test_eta_system_is_linear_form_of_derivative_system(P1, P2, E1, p1, p2, e, B0):
    assume(abs(e - 1) > 0.1)
    s, (dp1, dp2, de) = rates(P1, P2, E1, p1, p2, e, B0)
    C1 = (p2 - B0) / (e - 1)
    eta1, eta2 = e / (e - 1), p1 / (e - 1)
    d1, d2 = rd.q_linear_rhs(eta1, eta2, s, C1, B0)
    assert d1 == pytest.approx(-de / (e - 1) ** 2, rel=1e-9, abs=1e-9)
    assert d2 == pytest.approx((dp1 * (e - 1) - p1 * de) / (e - 1) ** 2, rel=1e-9, abs=1e-9)


@given(vals, vals, vals, vals, st.floats(0.0, 3.0))
def test_riccati_is_invariant_set_specialization(P1, P2, E1, p1, B0):
    s, (dp1, dp2, de) = rates(P1, P2, E1, p1, B0, 1.0, B0)
    assert dp2 == pytest.approx(0.0, abs=1e-14) and de == 0.0
    assert rd.riccati_p1_rhs(p1, s, B0) == pytest.approx(dp1, rel=1e-12, abs=1e-14)


# --- Hill coefficients --------------------------------------------------------------------


@pytest.mark.parametrize("B0", [0.5, 1.0, 2.0])
def test_hill_k_at_zero_amplitude(B0):
    orb = rd.small_amplitude_orbit(0.0, B0)
    H = rd.hill_coefficients(orb, B0, B0)
    assert np.max(np.abs(H.K(np.linspace(0.0, 3.0, 17)) - (1 + B0 * B0))) < 1e-12


def test_hill_coefficients_structure():
    B0 = 1.0
    orb = rd.small_amplitude_orbit(0.1, B0)
    th = np.linspace(0.0, orb.period, 64, endpoint=False)
    H = rd.hill_coefficients(orb, B0, B0)
    v = H(th)
    assert np.max(np.abs(v.N1)) < 1e-10
    # K has half the orbit period
    assert np.allclose(H.K(th + 0.5 * orb.period), v.K, atol=1e-10)
    assert np.min(v.K) > 0
    # N2 and K are different functions
    assert np.max(np.abs(v.N2 - v.K)) > 1e-2
    assert np.max(np.abs(rd.hill_coefficients(orb, B0, B0 + 1.0).N1(th))) > 1e-3


def test_hill_jets_match_finite_differences():
    B0 = 1.3
    orb = rd.small_amplitude_orbit(0.2, B0)
    H = rd.hill_coefficients(orb, B0, B0)
    t, h = 0.7, 1e-4
    v = H(np.array([t - h, t, t + h]))
    assert v.dF3[1] == pytest.approx((v.F3[2] - v.F3[0]) / (2 * h), rel=1e-6)
    assert v.dF1[1] == pytest.approx((v.F1[2] - v.F1[0]) / (2 * h), rel=1e-6)
