import math

import pytest
from hypothesis import given, strategies as st

from laddermem.vapor import (
    VaporConditions,
    VaporPressureCoefficients,
    celsius_to_kelvin,
    cesium_coefficients,
    cesium_conditions,
    doppler_fwhm,
    number_density,
    thermal_velocity,
    vapor_pressure,
)

from conftest import CS_MASS, K_B

temps = st.floats(min_value=1.0, max_value=2000.0)
masses = st.floats(min_value=1e-27, max_value=1e-24)


def test_thermal_velocity_cesium_60c():
    v = thermal_velocity(cesium_conditions(333.15))
    assert v == pytest.approx(math.sqrt(K_B * 333.15 / CS_MASS), rel=1e-12)
    assert v == pytest.approx(144.0, abs=0.5)


def test_thermal_velocity_vanishes_as_temperature_goes_to_zero():
    assert thermal_velocity(VaporConditions(1e-20, CS_MASS)) < 1e-9


def test_quadrupled_mass_halves_velocity():
    a = thermal_velocity(VaporConditions(333.15, CS_MASS))
    b = thermal_velocity(VaporConditions(333.15, 4 * CS_MASS))
    assert b == pytest.approx(a / 2, rel=1e-14)


@given(temps, masses, st.floats(min_value=0.1, max_value=10.0))
def test_thermal_velocity_scaling(t, m, f):
    v = thermal_velocity(VaporConditions(t, m))
    assert thermal_velocity(VaporConditions(t * f, m)) == pytest.approx(v * math.sqrt(f), rel=1e-12)
    assert thermal_velocity(VaporConditions(t, m * f)) == pytest.approx(v / math.sqrt(f), rel=1e-12)


@pytest.mark.parametrize("kw", [
    dict(temperature=0.0, atomic_mass=CS_MASS),
    dict(temperature=300.0, atomic_mass=-1.0),
    dict(temperature=300.0, atomic_mass=CS_MASS, cell_length=0.0),
])
def test_conditions_reject_invalid(kw):
    with pytest.raises(ValueError):
        VaporConditions(**kw)


def test_celsius_conversion():
    assert celsius_to_kelvin(60.0) == pytest.approx(333.15, abs=1e-12)


def test_number_density_hand_evaluation():
    # log10(P/Torr) = 7.046 - 3830/T
    t = 333.15
    p = 10 ** (7.046 - 3830.0 / t) * 101325 / 760
    n = number_density(cesium_conditions(t), cesium_coefficients())
    assert n == pytest.approx(p / (K_B * t), rel=1e-12)
    assert 5e17 < n < 2e18


def test_number_density_increases_above_lower_bound():
    c = cesium_coefficients()
    lo = number_density(cesium_conditions(c.t_min_k), c)
    hi = number_density(cesium_conditions(c.t_min_k + 10), c)
    assert hi > lo


@given(st.floats(min_value=290.0, max_value=400.0), st.floats(min_value=1e-6, max_value=110.0))
def test_number_density_strictly_monotone(t1, dt):
    t2 = t1 + dt
    if t2 > 400.0:
        return
    c = cesium_coefficients()
    assert number_density(cesium_conditions(t1), c) < number_density(cesium_conditions(t2), c)


@pytest.mark.parametrize("t", [289.0, 400.5])
def test_vapor_pressure_range_error(t):
    with pytest.raises(ValueError, match="outside correlation range"):
        vapor_pressure(t, cesium_coefficients())


def test_coefficients_reject_singular_range():
    with pytest.raises(ValueError):
        VaporPressureCoefficients(a=9.0, b_k=3800.0, c_k=-300.0)


def test_doppler_fwhm_d1_hand_evaluation():
    lam, t = 894.6e-9, 333.15
    oracle = math.sqrt(8 * math.log(2) * K_B * t / CS_MASS) / lam / 1e6
    val = doppler_fwhm(lam, cesium_conditions(t))
    assert val == pytest.approx(oracle, rel=1e-12)
    assert 350 < val < 420


def test_doppler_fwhm_limits_and_scaling():
    cond = cesium_conditions(333.15)
    assert doppler_fwhm(894.6e-9, VaporConditions(1e-14, CS_MASS)) < 1e-3
    assert doppler_fwhm(447.3e-9, cond) == pytest.approx(2 * doppler_fwhm(894.6e-9, cond), rel=1e-14)
    with pytest.raises(ValueError):
        doppler_fwhm(0.0, cond)


@given(st.floats(min_value=1e-7, max_value=1e-5), st.floats(min_value=1e-7, max_value=1e-5), temps)
def test_doppler_width_times_wavelength_is_constant(l1, l2, t):
    cond = VaporConditions(t, CS_MASS)
    assert doppler_fwhm(l1, cond) * l1 == pytest.approx(doppler_fwhm(l2, cond) * l2, rel=1e-12)
