import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from coldwave import characteristics as ch
from coldwave.core import SimConfig, make_initial_data, small_perturbation_data


def cfg(B0=1.0, horizon=10.0, **kw):
    return SimConfig(B0=B0, horizon=horizon, **kw)


def test_rest_state_is_fixed():
    tr = ch.integrate("relativistic", np.zeros(7), cfg())
    assert tr.status == "horizon"
    assert np.all(tr.states[:, [0, 1, 2, 4, 5, 6]] == 0.0)


@pytest.mark.parametrize("B0", [0.0, 0.7, 2.0])
def test_nonrelativistic_fields_match_closed_form(B0):
    V1, V2, E1 = 0.3, 0.1, 0.2
    w = math.sqrt(1.0 + B0 * B0)
    t = np.linspace(0.0, 10.0, 11)
    tr = ch.integrate("nonrel", [V1, V2, E1, 0.0, 0.1, 0.2, 0.05], cfg(B0, rel_tol=1e-12, abs_tol=1e-14),
                      t_eval=t)
    dv = -E1 - B0 * V2
    v1 = V1 * np.cos(w * t) + dv / w * np.sin(w * t)
    iv1 = V1 / w * np.sin(w * t) + dv / w**2 * (1.0 - np.cos(w * t))
    ref = np.column_stack([v1, V2 + B0 * iv1, E1 + iv1, iv1])
    assert np.allclose(tr.eval_states[:, :4], ref, atol=1e-10)


def jacobian_zero(p1, e):
    # for B0 = 0 the density obeys N = N0/J with J'' + J = N0, J(0) = 1, J'(0) = p1
    n0 = 1.0 - e
    J = lambda t: n0 + (1.0 - n0) * math.cos(t) + p1 * math.sin(t)
    ts = np.linspace(0.0, 2 * math.pi, 2001)
    k = next(i for i in range(len(ts)) if J(ts[i]) < 0)
    return brentq(J, ts[k - 1], ts[k], xtol=1e-14)


def test_nonrelativistic_breaking_time_matches_exact_blowup():
    p1, e = 1.0, 0.8
    tstar = jacobian_zero(p1, e)
    tr = ch.integrate("nonrelativistic", [0.0, 0.0, 0.0, 0.0, p1, 0.0, e], cfg(0.0, 20.0))
    assert tr.status == "breaking"
    assert tr.trigger in ("p1", "e")
    assert tr.breaking_time < tstar
    assert tstar - tr.breaking_time < 1e-4
    assert tr.blowup_estimate == pytest.approx(tstar, abs=1e-6)


def test_subcritical_derivatives_stay_bounded():
    # Delta = p1**2 + 2e - 1 < 0 at B0 = 0
    tr = ch.integrate("nonrelativistic", [0.0, 0.0, 0.0, 0.0, 0.2, 0.0, 0.1], cfg(0.0, 60.0))
    assert tr.status == "horizon"
    assert np.max(tr.max_derivative()) < 10.0


def test_relativistic_integrals_conserved():
    y0 = [0.3, -0.1, 0.2, 0.0, 0.05, 0.4, 0.1]
    tr = ch.integrate("relativistic", y0, cfg(1.3, 50.0))
    K1, K2 = tr.integrals()
    assert np.ptp(K1) < 1e-12
    assert np.ptp(K2) < 1e-8
    assert tr.integrals_drift["K2"] < 1e-9
    assert tr.integrals_drift["C1"] < 1e-9


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3), st.floats(0.0, 3.0))
def test_k_invariants_property(P1, P2, E1, B0):
    tr = ch.integrate("relativistic", [P1, P2, E1, 0.0, 0.0, 0.0, 0.0], cfg(B0, 20.0))
    assert tr.integrals_drift["K1"] < 1e-10
    assert tr.integrals_drift["K2"] < 1e-9


def test_time_reversal():
    y0 = [0.2, 0.1, -0.1, 0.0, 0.1, 0.3, 0.2]
    c = cfg(1.0, 40.0)
    tr = ch.integrate("relativistic", y0, c)
    assert ch.time_reversal_error(tr, c) < 1e-6


def test_dense_output_and_crossings():
    c = cfg(1.0, 30.0, rel_tol=1e-12, abs_tol=1e-14)
    tr = ch.integrate("relativistic", [0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], c, t_eval=[7.3])
    assert np.allclose(tr(7.3), tr.eval_states[0], atol=1e-10)
    ups = tr.crossings("P1", 0.0, direction=-1)
    assert len(ups) >= 6
    assert np.all(np.abs(tr(ups)[:, 0]) < 1e-9)


def test_reciprocal_fit_exact():
    t = np.linspace(0.0, 0.9, 10)
    assert ch.reciprocal_fit(t, 1.0 / (1.0 - t)) == pytest.approx(1.0)


def test_ensemble_preserves_ordering_and_counts():
    d = small_perturbation_data(0.1, 1.0)
    T = 2 * math.pi / math.sqrt(2.0)
    ens = ch.ensemble(d, cfg(1.0, T, n_characteristics=24), t_eval=[T])
    assert len(ens) == 24 and not ens.errors
    pos = np.array([tr.eval_states[0, 3] for tr in ens])
    assert np.all(np.diff(pos) > 0)
    assert ens.min_breaking_time is None
    assert ens.summary()["n_broken"] == 0


def test_ensemble_serial_and_threaded_agree():
    d = small_perturbation_data(0.2, 0.5)
    c = cfg(0.5, 5.0, n_characteristics=6)
    a = ch.ensemble(d, c, workers=1)
    b = ch.ensemble(d, c, workers=3)
    for x, y in zip(a, b):
        assert np.array_equal(x.states, y.states)


def test_ensemble_finds_breaking_seed():
    d = make_initial_data("general", B0=0.0, P1="0.9*cos(rho)", P2="0", E1="0.9*sin(rho)")
    ens = ch.ensemble(d, cfg(0.0, 20.0, n_characteristics=8), "nonrelativistic")
    exact = []
    for rho0 in ens.seeds:
        _, dd = d.sample(rho0)
        exact.append(jacobian_zero(dd.p1, dd.e) if dd.p1**2 + 2 * dd.e - 1 > 0 else math.inf)
    i = int(np.argmin(exact))
    assert ens.breaking_seed == ens.seeds[i]
    assert ens.min_breaking_time < exact[i] < ens.min_breaking_time + 1e-4
    broken = np.isfinite(ens.breaking_times)
    assert np.array_equal(broken, np.isfinite(exact))


def test_model_selection():
    y0 = [0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    a = ch.integrate(ch.rhs_rel, y0, cfg())
    b = ch.integrate("rel", y0, cfg())
    c = ch.integrate(ch.rhs_nonrel, y0, cfg())
    assert np.array_equal(a.final, b.final)
    assert not np.allclose(a.final, c.final)
    with pytest.raises(ValueError):
        ch.integrate("quantum", y0, cfg())
