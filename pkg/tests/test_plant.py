import numpy as np
import pytest

from fcsplit import plant as pl
from fcsplit.plant import (BatteryParams, FcParams, PlantInput, PlantModel,
                           PlantState, derive_coefficients)


def test_derived_coefficients_all_positive(model):
    for name, value in model.coeffs.as_dict().items():
        assert value > 0.0, name


def test_coefficient_overrides_are_honored():
    m = PlantModel(coeff_overrides={"c1": 5.0})
    assert m.coeffs.c1 == 5.0
    # untouched coefficients still come from the physical parameters
    base = PlantModel()
    assert m.coeffs.c3 == base.coeffs.c3


def test_derive_coefficients_matches_model_property(model):
    c = derive_coefficients(model.fc, model.omega_ref)
    assert c.as_dict() == pytest.approx(model.coeffs.as_dict())


def test_state_input_array_round_trip():
    x = np.arange(1.0, 9.0)
    u = np.array([100.0, 200.0, -5.0])
    assert np.array_equal(PlantState.from_array(x).as_array(), x)
    assert np.array_equal(PlantInput.from_array(u).as_array(), u)


def test_steady_state_delivers_demand(model, operating_point):
    x, u = operating_point
    assert pl.system_power(x, u, model) == pytest.approx(30e3, rel=1e-6)
    # zero battery current at the steady point
    assert u[2] == 0.0
    # the fuel-cell states are stationary; only the battery self-discharge
    # and filter states may drift, and those start at equilibrium too
    dx = pl.dynamics(x, u, model)
    scale = np.maximum(1.0, np.abs(x))
    assert np.max(np.abs(dx[:4]) / scale[:4]) < 1e-5
    assert abs(dx[7]) == 0.0  # no discharge accumulation at zero current


def test_steady_state_hits_oxygen_target(model):
    x, u = pl_steady(model, 30e3, lambda_target=1.55)
    assert pl.oxygen_excess_ratio(x, u, model) == pytest.approx(1.55, rel=1e-6)


def pl_steady(model, p, **kw):
    from fcsplit.mpc import steady_state
    return steady_state(model, p, **kw)


def test_steady_state_idle_below_threshold(model):
    x, u = pl_steady(model, 0.0)
    assert np.all(u == 0.0)
    assert x[3] == pytest.approx(pl.P_ATM)
    # cathode holds ambient composition: partial pressures sum to dry head
    assert x[0] + x[1] == pytest.approx(pl.P_ATM - model.coeffs.c2)


def test_open_circuit_voltage_increases_with_charge():
    b = BatteryParams()
    socs = np.linspace(0.2, 1.0, 9)
    v = [b.ocv(s) for s in socs]
    assert all(b2 > b1 for b1, b2 in zip(v, v[1:]))
    # analytic slope matches finite differences
    h = 1e-6
    for s in (0.3, 0.6, 0.9):
        fd = (b.ocv(s + h) - b.ocv(s - h)) / (2 * h)
        assert b.ocv_d(s) == pytest.approx(fd, rel=1e-5)


def test_battery_resistance_positive_and_falls_with_charge():
    b = BatteryParams()
    r_low, r_high = b.r_series(0.3), b.r_series(0.9)
    assert r_low > r_high > 0.0
    h = 1e-5
    for s in (0.4, 0.8):
        for f, fd_f in ((b.r_series, b.r_series_d), (b.r_s, b.r_s_d),
                        (b.c_s, b.c_s_d), (b.r_f, b.r_f_d), (b.c_f, b.c_f_d)):
            fd = (f(s + h) - f(s - h)) / (2 * h)
            assert fd_f(s) == pytest.approx(fd, rel=1e-3, abs=1e-9)


def test_stack_voltage_falls_with_current(model, operating_point):
    x, u = operating_point
    v = [pl.stack_voltage(x, i, model) for i in (50.0, 150.0, 300.0, 500.0)]
    assert all(b < a for a, b in zip(v, v[1:]))
    assert v[0] > 0.0


def test_hydrogen_rate_proportional_to_current(model):
    r1 = pl.hydrogen_rate(100.0, model)
    assert r1 > 0.0
    assert pl.hydrogen_rate(200.0, model) == pytest.approx(2.0 * r1)
    assert pl.hydrogen_rate(0.0, model) == 0.0


def test_compressor_flow_rises_with_speed_falls_with_backpressure(model, operating_point):
    x, _ = operating_point
    omega, p_sm = x[2], x[3]
    w = pl.psi_cm(omega, p_sm, model)
    assert w > 0.0
    assert pl.psi_cm(1.1 * omega, p_sm, model) > w
    assert pl.psi_cm(omega, 1.05 * p_sm, model) < w


def test_oxygen_excess_ratio_falls_with_stack_current(model, operating_point):
    x, u = operating_point
    lam = pl.oxygen_excess_ratio(x, u, model)
    u_hi = u.copy()
    u_hi[1] *= 1.2
    assert pl.oxygen_excess_ratio(x, u_hi, model) < lam


def test_system_power_gradient_matches_finite_differences(model, operating_point):
    x0, u0 = operating_point
    rng = np.random.default_rng(7)
    for _ in range(5):
        x = x0 * (1.0 + 0.02 * rng.uniform(-1, 1, x0.size))
        x[4] = 0.8
        u = u0.copy()
        u[0] *= 1.0 + 0.1 * rng.uniform(-1, 1)
        u[1] *= 1.0 + 0.1 * rng.uniform(-1, 1)
        u[2] = 20.0 * rng.uniform(-1, 1)
        _, gx, gu = pl._system_power_with_grad(x, u, model)
        for j in range(x.size):
            h = 1e-5 * max(1.0, abs(x[j]))
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            fd = (pl.system_power(xp, u, model)
                  - pl.system_power(xm, u, model)) / (2 * h)
            assert gx[j] == pytest.approx(fd, rel=2e-4, abs=1e-6)
        for j in range(u.size):
            h = 1e-5 * max(1.0, abs(u[j]))
            up, um = u.copy(), u.copy()
            up[j] += h
            um[j] -= h
            fd = (pl.system_power(x, up, model)
                  - pl.system_power(x, um, model)) / (2 * h)
            assert gu[j] == pytest.approx(fd, rel=2e-4, abs=1e-6)


def test_fc_params_reject_bad_values():
    with pytest.raises(ValueError):
        FcParams(t_st=-1.0)
