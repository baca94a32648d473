"""Continuous-time plant model: PEM fuel-cell air supply, battery equivalent
circuit, and discharge integrator.

State vector (8,):
    x[0]  p_O2      oxygen partial pressure in cathode        [Pa]
    x[1]  p_N2      nitrogen partial pressure in cathode      [Pa]
    x[2]  omega_cp  compressor angular speed                  [rad/s]
    x[3]  p_sm      supply manifold pressure                  [Pa]
    x[4]  v_soc     state of charge as capacitor voltage      [0..1]
    x[5]  v_s       short-time-constant RC voltage (pack)     [V]
    x[6]  v_f       long-time-constant RC voltage (pack)      [V]
    x[7]  q_dis     cumulative discharged charge              [A*s]

Input vector (3,):
    u[0]  v_cm   compressor motor voltage   [V]
    u[1]  I_st   stack current              [A]
    u[2]  I_bat  battery current, >0 = discharge  [A]

The air-supply dynamics follow the standard four-state reduction of the
cathode/manifold model (lumped coefficients c1..c16 derived from physical
parameters in :func:`derive_coefficients`).  The cathode exit flow is a
compressible nozzle, the compressor flow map is a smooth fitted surface,
and the stack polarization curve is a standard open-circuit/activation/
ohmic/concentration fit.  All fitted constants are overridable through the
configuration layer so published values can be substituted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

# Physical constants
R_GAS = 8.31446          # J/(mol K)
F_FARADAY = 96485.33     # C/mol
M_O2 = 31.999e-3         # kg/mol
M_N2 = 28.013e-3         # kg/mol
M_V = 18.015e-3          # kg/mol (water vapor)
M_H2 = 2.016e-3          # kg/mol
P_ATM = 101325.0         # Pa

N_STATES = 8
N_INPUTS = 3


class VoltageCollapseError(RuntimeError):
    """Raised when the polarization fit yields a non-positive cell voltage."""


def saturation_pressure(temp_k: float) -> float:
    """Water saturation pressure [Pa] via the Buck equation."""
    tc = temp_k - 273.15
    return 611.21 * math.exp((18.678 - tc / 234.5) * (tc / (257.14 + tc)))


@dataclass(frozen=True)
class PlantState:
    """Labeled view of the 8-component state vector."""

    p_o2: float
    p_n2: float
    omega_cp: float
    p_sm: float
    v_soc: float
    v_s: float
    v_f: float
    q_dis: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p_o2, self.p_n2, self.omega_cp, self.p_sm,
                         self.v_soc, self.v_s, self.v_f, self.q_dis])

    @staticmethod
    def from_array(x: np.ndarray) -> "PlantState":
        return PlantState(*(float(v) for v in x))


@dataclass(frozen=True)
class PlantInput:
    """Labeled view of the 3-component input vector."""

    v_cm: float
    i_st: float
    i_bat: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v_cm, self.i_st, self.i_bat])

    @staticmethod
    def from_array(u: np.ndarray) -> "PlantInput":
        return PlantInput(*(float(v) for v in u))


@dataclass(frozen=True)
class FcParams:
    """Physical parameters of the fuel-cell air-supply system."""

    n_cells: int = 381
    v_ca: float = 0.01          # m^3, single stack cathode volume
    v_sm: float = 0.02          # m^3, supply manifold volume
    eta_cm: float = 0.98        # motor mechanical efficiency
    eta_cp: float = 0.80        # compressor efficiency
    r_cm: float = 0.82          # Ohm, motor resistance
    j_cp: float = 5e-5          # kg m^2, compressor+motor inertia
    k_t: float = 0.0153         # N m / A, torque sensitivity
    k_v: float = 0.0153         # V / (rad/s), back-EMF constant
    gamma: float = 1.4          # air specific heat ratio
    c_p: float = 1004.0         # J/(kg K), air specific heat
    c_d: float = 0.70           # throttle discharge coefficient
    a_t: float = 1.6e-4         # m^2, throttle area
    k_ca_in: float = 3.629e-6   # kg/(s Pa), cathode inlet orifice
    y_o2_atm: float = 0.21      # O2 molar ratio at cathode inlet
    t_st: float = 353.15        # K, stack temperature
    t_atm: float = 298.15       # K, atmospheric temperature
    phi_atm: float = 0.5        # ambient relative humidity
    v_cm_min: float = 0.0       # V
    v_cm_max: float = 300.0     # V
    i_st_min: float = 0.0       # A
    i_st_max: float = 616.0     # A

    def __post_init__(self):
        for name in ("v_ca", "v_sm", "r_cm", "j_cp", "k_t", "k_v", "c_p",
                     "c_d", "a_t", "k_ca_in", "t_st", "t_atm"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"FcParams.{name} must be positive")
        for name in ("eta_cm", "eta_cp", "y_o2_atm", "phi_atm"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"FcParams.{name} must lie in (0, 1]")
        if self.gamma <= 1.0:
            raise ValueError("FcParams.gamma must exceed 1")


@dataclass(frozen=True)
class CompressorMap:
    """Smooth fitted compressor flow map.

    Mass flow is a clipped-linear surface in speed and normalized pressure
    head h = (p_sm/p_atm)^((gamma-1)/gamma) - 1:

        w_raw = flow_gain*omega - (head_droop*omega + head_leak)*h
        psi_cm = ramp(w_raw)

    with ``ramp`` a C1 rectifier of half-width ``smooth_width`` so the map
    stays differentiable where the flow pinches off.
    """

    flow_gain: float = 9.0e-6     # kg/s per rad/s
    head_droop: float = 1.6e-6    # kg/s per rad/s per unit head
    head_leak: float = 0.010      # kg/s per unit head
    smooth_width: float = 5e-4    # kg/s


@dataclass(frozen=True)
class Polarization:
    """Stack polarization fit: open-circuit + activation + ohmic +
    concentration losses, per cell, as a function of current density and
    cathode oxygen partial pressure."""

    e_oc: float = 1.00            # V, open-circuit at reference O2 pressure
    k_nernst: float = 0.016       # V per e-fold of p_O2
    p_o2_ref: float = 0.21 * P_ATM  # Pa
    p_o2_floor: float = 1000.0    # Pa, keeps log term finite
    a_act: float = 0.045          # V, activation scale
    i_exchange: float = 0.0012    # A/cm^2
    r_ohm: float = 0.055          # Ohm cm^2
    m_conc: float = 2.0e-4        # V
    n_conc: float = 2.4           # cm^2/A
    cell_area_cm2: float = 280.0


@dataclass(frozen=True)
class BatteryParams:
    """Pack-level equivalent circuit built from exponential cell fits.

    The cell-level elements use the Chen-style exponential+polynomial
    forms; the capacitor fits are rescaled so every element stays strictly
    positive over v_soc in [0, 1].  Pack construction: voltages scale with
    the series count, resistances with series/parallel, capacitances with
    parallel/series.  C_b maps one unit of v_soc to the full pack charge.
    """

    n_series: int = 15
    n_parallel: int = 12
    capacity_ah: float = 12.0     # pack capacity
    r_self_discharge: float = 500.0  # Ohm, pack-level across C_b

    # open-circuit voltage fit (per cell)
    ocv_exp_amp: float = -1.031
    ocv_exp_rate: float = 35.0
    ocv_poly: tuple = (3.685, 0.2156, -0.1178, 0.3201)

    # series resistance fit (per cell)
    rser_exp_amp: float = 0.1562
    rser_exp_rate: float = 24.37
    rser_const: float = 0.22338

    # short RC pair (per cell)
    rs_exp_amp: float = 0.3208
    rs_exp_rate: float = 29.14
    rs_const: float = 0.04669
    cs_scale: float = 703.6
    cs_exp_frac: float = 0.93
    cs_exp_rate: float = 13.51

    # long RC pair (per cell)
    rf_exp_amp: float = 6.603
    rf_exp_rate: float = 155.2
    rf_const: float = 0.04984
    cf_scale: float = 4475.0
    cf_exp_frac: float = 0.93
    cf_exp_rate: float = 27.12

    @property
    def c_b(self) -> float:
        """Pack charge per unit v_soc [A*s]."""
        return 3600.0 * self.capacity_ah

    @property
    def _r_scale(self) -> float:
        return self.n_series / self.n_parallel

    @property
    def _c_scale(self) -> float:
        return self.n_parallel / self.n_series

    def ocv(self, soc: float) -> float:
        """Pack open-circuit voltage [V]."""
        a0, a1, a2, a3 = self.ocv_poly
        cell = (self.ocv_exp_amp * math.exp(-self.ocv_exp_rate * soc)
                + a0 + a1 * soc + a2 * soc * soc + a3 * soc ** 3)
        return self.n_series * cell

    def ocv_d(self, soc: float) -> float:
        a0, a1, a2, a3 = self.ocv_poly
        cell = (-self.ocv_exp_rate * self.ocv_exp_amp
                * math.exp(-self.ocv_exp_rate * soc)
                + a1 + 2.0 * a2 * soc + 3.0 * a3 * soc * soc)
        return self.n_series * cell

    def r_series(self, soc: float) -> float:
        cell = self.rser_exp_amp * math.exp(-self.rser_exp_rate * soc) + self.rser_const
        return self._r_scale * cell

    def r_series_d(self, soc: float) -> float:
        cell = -self.rser_exp_rate * self.rser_exp_amp * math.exp(-self.rser_exp_rate * soc)
        return self._r_scale * cell

    def r_s(self, soc: float) -> float:
        cell = self.rs_exp_amp * math.exp(-self.rs_exp_rate * soc) + self.rs_const
        return self._r_scale * cell

    def r_s_d(self, soc: float) -> float:
        cell = -self.rs_exp_rate * self.rs_exp_amp * math.exp(-self.rs_exp_rate * soc)
        return self._r_scale * cell

    def c_s(self, soc: float) -> float:
        cell = self.cs_scale * (1.0 - self.cs_exp_frac * math.exp(-self.cs_exp_rate * soc))
        return self._c_scale * cell

    def c_s_d(self, soc: float) -> float:
        cell = self.cs_scale * self.cs_exp_frac * self.cs_exp_rate * math.exp(-self.cs_exp_rate * soc)
        return self._c_scale * cell

    def r_f(self, soc: float) -> float:
        cell = self.rf_exp_amp * math.exp(-self.rf_exp_rate * soc) + self.rf_const
        return self._r_scale * cell

    def r_f_d(self, soc: float) -> float:
        cell = -self.rf_exp_rate * self.rf_exp_amp * math.exp(-self.rf_exp_rate * soc)
        return self._r_scale * cell

    def c_f(self, soc: float) -> float:
        cell = self.cf_scale * (1.0 - self.cf_exp_frac * math.exp(-self.cf_exp_rate * soc))
        return self._c_scale * cell

    def c_f_d(self, soc: float) -> float:
        cell = self.cf_scale * self.cf_exp_frac * self.cf_exp_rate * math.exp(-self.cf_exp_rate * soc)
        return self._c_scale * cell


@dataclass(frozen=True)
class DerivedCoeffs:
    """Lumped coefficients c1..c16 of the four-state air-supply reduction."""

    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    c6: float
    c7: float
    c8: float
    c9: float
    c10: float
    c11: float
    c12: float
    c13: float
    c14: float
    c15: float
    c16: float

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def humidity_ratio(params: FcParams) -> float:
    """Ambient humidity ratio (kg vapor per kg dry air), held constant."""
    p_v = params.phi_atm * saturation_pressure(params.t_atm)
    return (M_V / _m_air_dry(params)) * p_v / (P_ATM - p_v)


def _m_air_dry(params: FcParams) -> float:
    """Molar mass of dry inlet air [kg/mol]."""
    return params.y_o2_atm * M_O2 + (1.0 - params.y_o2_atm) * M_N2


def _m_air_moist(params: FcParams) -> float:
    """Molar mass of moist ambient air [kg/mol]."""
    p_v = params.phi_atm * saturation_pressure(params.t_atm)
    y_v = p_v / P_ATM
    return (1.0 - y_v) * _m_air_dry(params) + y_v * M_V


def oxygen_mass_fraction(params: FcParams) -> float:
    """O2 mass fraction of the dry inlet air."""
    return params.y_o2_atm * M_O2 / _m_air_dry(params)


def derive_coefficients(params: FcParams,
                        omega_ref: float = 10000.0,
                        overrides: dict | None = None) -> DerivedCoeffs:
    """Compute the lumped coefficients c1..c16 from physical parameters.

    The compressor load term is linearized about ``omega_ref`` so that the
    shaft power implied by c10 matches the thermodynamic compression power
    exactly at that speed.  Any coefficient can be overridden through
    ``overrides`` (keys "c1".."c16") to substitute published values.
    """
    if params.v_ca <= 0 or params.v_sm <= 0 or params.t_st <= 0 or params.t_atm <= 0:
        raise ValueError("volumes and temperatures must be positive")

    p_sat_st = saturation_pressure(params.t_st)
    w_atm = humidity_ratio(params)
    x_o2 = oxygen_mass_fraction(params)
    x_n2 = 1.0 - x_o2
    rt_ca = R_GAS * params.t_st / params.v_ca

    c = {
        # cathode inlet: partial-pressure rise per Pa of manifold head
        "c1": rt_ca * x_o2 * params.k_ca_in / (M_O2 * (1.0 + w_atm)),
        # vapor partial pressure in the (saturated) cathode
        "c2": p_sat_st,
        # cathode exit flow conversion, shared by O2 and N2 balances
        "c3": rt_ca,
        "c4": M_O2,
        "c5": M_N2,
        "c6": M_V * p_sat_st,
        # oxygen consumption per ampere of stack current
        "c7": params.n_cells * R_GAS * params.t_st / (4.0 * F_FARADAY * params.v_ca),
        "c8": rt_ca * x_n2 * params.k_ca_in / (M_N2 * (1.0 + w_atm)),
        # compressor motor: back-EMF drag and voltage gain
        "c9": params.eta_cm * params.k_t * params.k_v / (params.j_cp * params.r_cm),
        # compression load, linearized about omega_ref
        "c10": params.c_p * params.t_atm / (params.eta_cp * params.j_cp * omega_ref ** 2),
        "c11": P_ATM,
        "c12": (params.gamma - 1.0) / params.gamma,
        "c13": params.eta_cm * params.k_t / (params.j_cp * params.r_cm),
        # manifold filling with compression heating of the inlet stream
        "c14": params.gamma * R_GAS * params.t_atm / (_m_air_moist(params) * params.v_sm),
        "c15": 1.0 / params.eta_cp,
        "c16": params.k_ca_in,
    }
    if overrides:
        unknown = set(overrides) - set(c)
        if unknown:
            raise ValueError(f"unknown coefficient overrides: {sorted(unknown)}")
        c.update(overrides)
    return DerivedCoeffs(**c)


@dataclass(frozen=True)
class PlantModel:
    """Immutable bundle of all plant parameters plus derived coefficients."""

    fc: FcParams = field(default_factory=FcParams)
    battery: BatteryParams = field(default_factory=BatteryParams)
    compressor: CompressorMap = field(default_factory=CompressorMap)
    polarization: Polarization = field(default_factory=Polarization)
    omega_ref: float = 10000.0
    coeff_overrides: dict | None = None
    i_st_eps: float = 1e-3        # A, sentinel threshold for lambda_O2
    lambda_sentinel: float = 1e3

    def __post_init__(self):
        object.__setattr__(self, "_coeffs",
                           derive_coefficients(self.fc, self.omega_ref,
                                               self.coeff_overrides))
        k = self.fc.c_d * self.fc.a_t / math.sqrt(
            R_GAS / _m_air_moist(self.fc) * self.fc.t_st)
        object.__setattr__(self, "_nozzle_gain", k)
        object.__setattr__(self, "_x_o2_in",
                           oxygen_mass_fraction(self.fc) / (1.0 + humidity_ratio(self.fc)))

    @property
    def coeffs(self) -> DerivedCoeffs:
        return self._coeffs

    @property
    def o2_inlet_fraction(self) -> float:
        """O2 mass flow per unit total (moist) inlet mass flow."""
        return self._x_o2_in


# ---------------------------------------------------------------------------
# flow maps


def psi_ca(p_o2: float, p_n2: float, model: PlantModel) -> float:
    """Cathode exit mass flow [kg/s] through the outlet throttle."""
    return _psi_ca_with_grad(p_o2, p_n2, model)[0]


def _psi_ca_with_grad(p_o2: float, p_n2: float, model: PlantModel):
    """Nozzle flow and its derivative with respect to cathode pressure.

    Subcritical and choked branches of the compressible nozzle join with a
    continuous first derivative at the critical pressure ratio.
    """
    c = model.coeffs
    g = model.fc.gamma
    p_ca = p_o2 + p_n2 + c.c2
    if p_ca <= P_ATM:
        return 0.0, 0.0
    k = model._nozzle_gain
    r = P_ATM / p_ca
    r_crit = (2.0 / (g + 1.0)) ** (g / (g - 1.0))
    if r > r_crit:
        a = 1.0 / g
        kappa = (g - 1.0) / g
        b = 2.0 * g / (g - 1.0)
        root = math.sqrt(b * (1.0 - r ** kappa))
        h = r ** a * root
        hp = a * r ** (a - 1.0) * root - r ** a * b * kappa * r ** (kappa - 1.0) / (2.0 * root)
        w = k * p_ca * h
        dw = k * (h - r * hp)
    else:
        c_ch = math.sqrt(g) * (2.0 / (g + 1.0)) ** ((g + 1.0) / (2.0 * (g - 1.0)))
        w = k * p_ca * c_ch
        dw = k * c_ch
    return w, dw


def psi_cm(omega_cp: float, p_sm: float, model: PlantModel) -> float:
    """Compressor mass flow [kg/s] from the smooth fitted map."""
    return _psi_cm_with_grad(omega_cp, p_sm, model)[0]


def _ramp(w: float, delta: float):
    """C1 rectifier: 0 below zero, quadratic blend on [0, delta], linear above."""
    if w <= 0.0:
        return 0.0, 0.0
    if w >= delta:
        return w - 0.5 * delta, 1.0
    return 0.5 * w * w / delta, w / delta


def _psi_cm_with_grad(omega_cp: float, p_sm: float, model: PlantModel):
    """Flow map value and partials (d/d omega, d/d p_sm)."""
    c = model.coeffs
    cm = model.compressor
    ratio = max(p_sm, 1.0) / c.c11
    head = ratio ** c.c12 - 1.0
    head_d = (c.c12 / c.c11) * ratio ** (c.c12 - 1.0) if p_sm > 1.0 else 0.0
    w_raw = cm.flow_gain * omega_cp - (cm.head_droop * omega_cp + cm.head_leak) * head
    w, slope = _ramp(w_raw, cm.smooth_width)
    dw_domega = slope * (cm.flow_gain - cm.head_droop * head)
    dw_dp = slope * (-(cm.head_droop * omega_cp + cm.head_leak) * head_d)
    return w, dw_domega, dw_dp


# ---------------------------------------------------------------------------
# dynamics


def fc_dynamics(x: np.ndarray, u: np.ndarray, model: PlantModel) -> np.ndarray:
    """Time derivatives of [p_O2, p_N2, omega_cp, p_sm]."""
    c = model.coeffs
    x1, x2, x3, x4 = x[0], x[1], x[2], x[3]
    s = x4 - x1 - x2 - c.c2
    den = c.c4 * x1 + c.c5 * x2 + c.c6
    if den <= 0.0:
        raise FloatingPointError("cathode mass denominator non-positive")
    w_out = psi_ca(x1, x2, model)
    w_cp = psi_cm(x3, x4, model)
    head = (x4 / c.c11) ** c.c12 - 1.0

    f1 = c.c1 * s - c.c3 * x1 * w_out / den - c.c7 * u[1]
    f2 = c.c8 * s - c.c3 * x2 * w_out / den
    f3 = -c.c9 * x3 - c.c10 * x3 * head * w_cp + c.c13 * u[0]
    f4 = c.c14 * (1.0 + c.c15 * head) * (w_cp - c.c16 * s)
    out = np.array([f1, f2, f3, f4])
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite fuel-cell dynamics")
    return out


def battery_dynamics(x: np.ndarray, u: np.ndarray, model: PlantModel) -> np.ndarray:
    """Time derivatives of [v_soc, v_s, v_f]."""
    bp = model.battery
    soc, v_s, v_f = x[4], x[5], x[6]
    i_bat = u[2]
    f5 = -soc / (bp.r_self_discharge * bp.c_b) - i_bat / bp.c_b
    f6 = -v_s / (bp.r_s(soc) * bp.c_s(soc)) + i_bat / bp.c_s(soc)
    f7 = -v_f / (bp.r_f(soc) * bp.c_f(soc)) + i_bat / bp.c_f(soc)
    return np.array([f5, f6, f7])


def dynamics(x: np.ndarray, u: np.ndarray, model: PlantModel) -> np.ndarray:
    """Full 8-state derivative f(x, u)."""
    out = np.empty(N_STATES)
    out[0:4] = fc_dynamics(x, u, model)
    out[4:7] = battery_dynamics(x, u, model)
    out[7] = u[2]
    return out


# ---------------------------------------------------------------------------
# output maps


def stack_voltage(x: np.ndarray, i_st: float, model: PlantModel) -> float:
    """Stack terminal voltage [V] from the polarization fit."""
    v, _, _ = _stack_voltage_with_grad(x[0], i_st, model)
    return v


def _stack_voltage_with_grad(p_o2: float, i_st: float, model: PlantModel):
    """Stack voltage plus partials (d/d p_O2, d/d I_st)."""
    pol = model.polarization
    n = model.fc.n_cells
    p_eff = p_o2 + pol.p_o2_floor
    i = i_st / pol.cell_area_cm2
    z = i / (2.0 * pol.i_exchange)
    act = pol.a_act * math.asinh(z)
    conc = pol.m_conc * (math.exp(pol.n_conc * i) - 1.0)
    v_cell = (pol.e_oc + pol.k_nernst * math.log(p_eff / pol.p_o2_ref)
              - act - pol.r_ohm * i - conc)
    if v_cell <= 0.0:
        raise VoltageCollapseError(
            f"cell voltage collapsed (v_cell={v_cell:.3f} V at I_st={i_st:.1f} A)")
    dv_dp = n * pol.k_nernst / p_eff
    dcell_di = (-pol.a_act / (2.0 * pol.i_exchange * math.sqrt(1.0 + z * z))
                - pol.r_ohm
                - pol.m_conc * pol.n_conc * math.exp(pol.n_conc * i))
    dv_di = n * dcell_di / pol.cell_area_cm2
    return n * v_cell, dv_dp, dv_di


def battery_terminal_voltage(x: np.ndarray, u: np.ndarray, model: PlantModel) -> float:
    """Pack terminal voltage [V] under current u[2] (positive = discharge)."""
    bp = model.battery
    return bp.ocv(x[4]) - x[5] - x[6] - bp.r_series(x[4]) * u[2]


def compressor_power(x: np.ndarray, u: np.ndarray, model: PlantModel) -> float:
    """Electrical power drawn by the compressor motor [W]."""
    return u[0] * (u[0] - model.fc.k_v * x[2]) / model.fc.r_cm


def system_power(x: np.ndarray, u: np.ndarray, model: PlantModel) -> float:
    """Net system power [W]: stack minus compressor plus battery."""
    p_stack = stack_voltage(x, u[1], model) * u[1]
    p_cm = compressor_power(x, u, model)
    p_bat = battery_terminal_voltage(x, u, model) * u[2]
    return p_stack - p_cm + p_bat


def _system_power_with_grad(x: np.ndarray, u: np.ndarray, model: PlantModel):
    """P_sys plus gradients w.r.t. x (8,) and u (3,)."""
    fc = model.fc
    bp = model.battery
    v_st, dv_dp, dv_di = _stack_voltage_with_grad(x[0], u[1], model)
    soc = x[4]
    r_ser = bp.r_series(soc)
    v_t = bp.ocv(soc) - x[5] - x[6] - r_ser * u[2]
    p = v_st * u[1] - u[0] * (u[0] - fc.k_v * x[2]) / fc.r_cm + v_t * u[2]

    px = np.zeros(N_STATES)
    px[0] = u[1] * dv_dp
    px[2] = fc.k_v * u[0] / fc.r_cm
    px[4] = u[2] * (bp.ocv_d(soc) - bp.r_series_d(soc) * u[2])
    px[5] = -u[2]
    px[6] = -u[2]
    pu = np.array([
        -(2.0 * u[0] - fc.k_v * x[2]) / fc.r_cm,
        v_st + u[1] * dv_di,
        v_t - r_ser * u[2],
    ])
    return p, px, pu


def oxygen_inflow_gain(model: PlantModel) -> float:
    """O2 mass inflow per Pa of manifold-to-cathode pressure head [kg/(s Pa)]."""
    return model.o2_inlet_fraction * model.fc.k_ca_in


def oxygen_reaction_gain(model: PlantModel) -> float:
    """O2 mass consumed per ampere of stack current [kg/(s A)]."""
    return M_O2 * model.fc.n_cells / (4.0 * F_FARADAY)


def oxygen_excess_ratio(x: np.ndarray, u: np.ndarray, model: PlantModel) -> float:
    """Oxygen excess ratio lambda_O2 = supplied / consumed.

    Below ``model.i_st_eps`` the ratio degenerates (0/0 at no load); a large
    sentinel is returned so the starvation constraint is trivially met.
    """
    i_st = u[1]
    if i_st <= model.i_st_eps:
        return model.lambda_sentinel
    c = model.coeffs
    head = x[3] - x[0] - x[1] - c.c2
    w_in = oxygen_inflow_gain(model) * head
    w_react = oxygen_reaction_gain(model) * i_st
    return w_in / w_react


def hydrogen_rate(i_st: float, model: PlantModel) -> float:
    """Hydrogen consumption rate [kg/s], proportional to stack current."""
    return M_H2 * model.fc.n_cells * i_st / (2.0 * F_FARADAY)
