import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coldwave.core import (
    DerivativeState,
    Family,
    FieldState,
    InitialDataError,
    SimConfig,
    ValidationError,
    c1_of,
    criterion_nonrel,
    criterion_rel_smallamp,
    density,
    first_integrals,
    integrals_of,
    lorentz_gamma,
    make_initial_data,
    small_perturbation_data,
)

mom = st.floats(-50.0, 50.0, allow_nan=False)


@given(mom, mom)
def test_gamma_and_speed_bounds(P1, P2):
    g = lorentz_gamma(P1, P2)
    assert g >= 1.0
    assert (P1 / g) ** 2 + (P2 / g) ** 2 < 1.0


@given(mom, mom, mom, st.floats(-5, 5))
def test_k2_at_least_two_and_array_form_agrees(P1, P2, E1, B0):
    fi = first_integrals(FieldState(0.0, 0.0, P1, P2, E1), B0)
    assert fi.K2 >= 2.0
    k1, k2 = integrals_of(np.array([P1]), np.array([P2]), np.array([E1]), B0)
    assert k1[0] == pytest.approx(fi.K1)
    assert k2[0] == pytest.approx(fi.K2)


def test_rest_state_integrals():
    fi = first_integrals(FieldState(0.0, 0.0, 0.0, 0.0, 0.0), 1.0)
    assert (fi.K1, fi.K2) == (0.0, 2.0)


def test_fieldstate_rejects_nan():
    with pytest.raises(ValidationError):
        FieldState(0.0, 0.0, math.nan, 0.0, 0.0)


def test_c1_and_density():
    assert c1_of(DerivativeState(0.0, 3.0, 2.0), 1.0) == 2.0
    assert c1_of(DerivativeState(0.0, 3.0, 1.0), 1.0) is None
    assert density(0.25) == 0.75
    assert DerivativeState(0.0, 0.0, -1.0).density == 2.0


def test_small_perturbation_family():
    d = small_perturbation_data(0.1, 1.0)
    assert d.family is Family.CONSTANT_K1
    k1, k2 = d.integrals_on_grid()
    assert np.max(np.abs(k1)) < 1e-15
    # K2 is constant to O(eps**4) for the matched transverse amplitude
    assert np.ptp(k2) < 1e-4
    _, k2b = small_perturbation_data(0.1, 1.0, transverse_scale=0.0).integrals_on_grid()
    assert np.ptp(k2b) > 1e-3
    s, dd = d.sample(0.0)
    assert (s.P1, s.P2, s.E1) == (0.1, 0.0, 0.0)
    assert dd.e == pytest.approx(0.1 / math.sqrt(2))


def test_small_perturbation_validation():
    with pytest.raises(ValidationError):
        small_perturbation_data(-1.0, 1.0)
    with pytest.raises(ValidationError):
        small_perturbation_data(0.1, 1.0, k=0.0)


def test_constant_k1_family_checks_invariant():
    d = make_initial_data("constant-k1", B0=2.0, P1="0.1*cos(rho)", E1="0.05*sin(rho)", K1=0.3)
    k1, _ = d.integrals_on_grid()
    assert np.allclose(k1, 0.3, atol=1e-14)
    with pytest.raises(InitialDataError):
        make_initial_data("constant-k1", B0=2.0, P1="0.1", E1=None, K1=0.3)


def test_constant_k2_family():
    d = make_initial_data("constant-k2", B0=1.0, P2="0.02*sin(rho)", E1="0.02*sin(rho)", K2=2.01, sign=-1)
    _, k2 = d.integrals_on_grid()
    assert np.allclose(k2, 2.01, atol=1e-13)
    assert float(d.P1(0.3)) < 0
    with pytest.raises(InitialDataError):
        make_initial_data("constant-k2", B0=1.0, P2="0.5*sin(rho)", E1="0", K2=2.01)
    with pytest.raises(InitialDataError):
        make_initial_data("constant-k2", B0=1.0, P2="0", E1="0", K2=1.5)


def test_general_family_needs_all_profiles():
    with pytest.raises(InitialDataError):
        make_initial_data("general", B0=1.0, P1="0", P2="0")
    with pytest.raises(ValueError):
        make_initial_data("bogus", B0=1.0)


def test_criterion_nonrel_sign():
    B0 = 1.0
    w = math.sqrt(2.0)
    for a, smooth in ((0.3 * w, True), (0.7 * w, False)):
        d = make_initial_data("general", B0=B0, P1=f"{a}*cos(rho)", P2=f"{a * B0 / w}*sin(rho)",
                              E1=f"{a / w}*sin(rho)")
        delta = criterion_nonrel(d, d.grid())
        assert bool(np.max(delta) < 0) is smooth
        assert np.max(delta) == pytest.approx(2 * a * w - w * w, abs=1e-12)


def test_criterion_rel_smallamp():
    assert criterion_rel_smallamp(DerivativeState(0.0, 0.0, 0.4), 0.0)
    assert not criterion_rel_smallamp(DerivativeState(0.0, 0.0, 0.6), 0.0)
    # threshold in e at p2 = B0 e: (2 B0**2 + 1) / (2 B0**2 + 2)
    B0 = 2.0
    et = (2 * B0**2 + 1) / (2 * B0**2 + 2)
    assert criterion_rel_smallamp(DerivativeState(0.0, B0 * (et - 1e-9), et - 1e-9), B0)
    assert not criterion_rel_smallamp(DerivativeState(0.0, B0 * (et + 1e-9), et + 1e-9), B0)


@pytest.mark.parametrize("kw", [
    {"horizon": 0.0}, {"rel_tol": 0.0}, {"abs_tol": 2.0}, {"blowup_threshold": 0.5},
    {"n_characteristics": 0}, {"epsilon": -0.1}, {"stride": 0}, {"B0": math.inf},
])
def test_simconfig_validation(kw):
    base = {"B0": 1.0, "horizon": 1.0}
    base.update(kw)
    with pytest.raises(ValidationError):
        SimConfig(**base)
