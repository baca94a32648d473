"""Discrete transition map and its exact-to-the-integrator Jacobians.

``step`` integrates the plant with fixed-step RK4 under zero-order-hold
inputs.  ``step_with_sensitivities`` differentiates the same RK4 stages
(rather than solving the variational ODE with a separate scheme), so the
returned A = dF/dx and B = dF/du are the exact Jacobians of the
implemented transition map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plant import N_INPUTS, N_STATES, PlantModel, _psi_ca_with_grad, _psi_cm_with_grad, dynamics

DEFAULT_SUBSTEPS = 5


class IntegrationError(RuntimeError):
    """Raised when integration produces a non-finite state component."""

    def __init__(self, component: int):
        self.component = component
        super().__init__(f"non-finite state component {component} during integration")


@dataclass(frozen=True)
class DiscreteStep:
    """One-step transition with state and input sensitivities."""

    x_next: np.ndarray   # (8,)
    a: np.ndarray        # (8, 8) dF/dx
    b: np.ndarray        # (8, 3) dF/du


def jacobian_continuous(x: np.ndarray, u: np.ndarray, model: PlantModel):
    """Closed-form partials (df/dx, df/du) of the continuous dynamics."""
    c = model.coeffs
    bp = model.battery
    x1, x2, x3, x4 = x[0], x[1], x[2], x[3]
    soc = x[4]

    fx = np.zeros((N_STATES, N_STATES))
    fu = np.zeros((N_STATES, N_INPUTS))

    s = x4 - x1 - x2 - c.c2
    den = c.c4 * x1 + c.c5 * x2 + c.c6
    w_out, dw_out = _psi_ca_with_grad(x1, x2, model)
    w_cp, dw_domega, dw_dp = _psi_cm_with_grad(x3, x4, model)
    head = (x4 / c.c11) ** c.c12 - 1.0
    head_d = (c.c12 / c.c11) * (x4 / c.c11) ** (c.c12 - 1.0)

    den2 = den * den
    # f1 = c1*s - c3*x1*w_out/den - c7*u2
    fx[0, 0] = -c.c1 - c.c3 * ((w_out + x1 * dw_out) * den - x1 * w_out * c.c4) / den2
    fx[0, 1] = -c.c1 - c.c3 * (x1 * dw_out * den - x1 * w_out * c.c5) / den2
    fx[0, 3] = c.c1
    fu[0, 1] = -c.c7

    # f2 = c8*s - c3*x2*w_out/den
    fx[1, 0] = -c.c8 - c.c3 * (x2 * dw_out * den - x2 * w_out * c.c4) / den2
    fx[1, 1] = -c.c8 - c.c3 * ((w_out + x2 * dw_out) * den - x2 * w_out * c.c5) / den2
    fx[1, 3] = c.c8

    # f3 = -c9*x3 - c10*x3*head*w_cp + c13*u1
    fx[2, 2] = -c.c9 - c.c10 * head * (w_cp + x3 * dw_domega)
    fx[2, 3] = -c.c10 * x3 * (head_d * w_cp + head * dw_dp)
    fu[2, 0] = c.c13

    # f4 = c14*(1 + c15*head)*(w_cp - c16*s)
    heat = 1.0 + c.c15 * head
    fx[3, 0] = c.c14 * heat * c.c16
    fx[3, 1] = c.c14 * heat * c.c16
    fx[3, 2] = c.c14 * heat * dw_domega
    fx[3, 3] = (c.c14 * c.c15 * head_d * (w_cp - c.c16 * s)
                + c.c14 * heat * (dw_dp - c.c16))

    # battery
    fx[4, 4] = -1.0 / (bp.r_self_discharge * bp.c_b)
    fu[4, 2] = -1.0 / bp.c_b

    r_s, c_s = bp.r_s(soc), bp.c_s(soc)
    a6 = 1.0 / (r_s * c_s)
    fx[5, 4] = (x[5] * (bp.r_s_d(soc) * c_s + r_s * bp.c_s_d(soc)) * a6 * a6
                - u[2] * bp.c_s_d(soc) / (c_s * c_s))
    fx[5, 5] = -a6
    fu[5, 2] = 1.0 / c_s

    r_f, c_f = bp.r_f(soc), bp.c_f(soc)
    a7 = 1.0 / (r_f * c_f)
    fx[6, 4] = (x[6] * (bp.r_f_d(soc) * c_f + r_f * bp.c_f_d(soc)) * a7 * a7
                - u[2] * bp.c_f_d(soc) / (c_f * c_f))
    fx[6, 6] = -a7
    fu[6, 2] = 1.0 / c_f

    # f8 = u3
    fu[7, 2] = 1.0
    return fx, fu


def step(x: np.ndarray, u: np.ndarray, dt: float, model: PlantModel,
         n_substeps: int = DEFAULT_SUBSTEPS) -> np.ndarray:
    """Integrate the plant over one sampling period (zero-order hold)."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    h = dt / n_substeps
    xk = np.asarray(x, dtype=float)
    for _ in range(n_substeps):
        k1 = dynamics(xk, u, model)
        k2 = dynamics(xk + 0.5 * h * k1, u, model)
        k3 = dynamics(xk + 0.5 * h * k2, u, model)
        k4 = dynamics(xk + h * k3, u, model)
        xk = xk + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    bad = np.flatnonzero(~np.isfinite(xk))
    if bad.size:
        raise IntegrationError(int(bad[0]))
    return xk


def step_with_sensitivities(x: np.ndarray, u: np.ndarray, dt: float,
                            model: PlantModel,
                            n_substeps: int = DEFAULT_SUBSTEPS) -> DiscreteStep:
    """Transition map and its Jacobians, differentiated through RK4 stages."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    h = dt / n_substeps
    xk = np.asarray(x, dtype=float)
    phi = np.eye(N_STATES)
    psi = np.zeros((N_STATES, N_INPUTS))
    eye = np.eye(N_STATES)
    for _ in range(n_substeps):
        k1 = dynamics(xk, u, model)
        j1x, j1u = jacobian_continuous(xk, u, model)
        d1, e1 = j1x, j1u

        x2 = xk + 0.5 * h * k1
        k2 = dynamics(x2, u, model)
        j2x, j2u = jacobian_continuous(x2, u, model)
        d2 = j2x @ (eye + 0.5 * h * d1)
        e2 = j2u + j2x @ (0.5 * h * e1)

        x3 = xk + 0.5 * h * k2
        k3 = dynamics(x3, u, model)
        j3x, j3u = jacobian_continuous(x3, u, model)
        d3 = j3x @ (eye + 0.5 * h * d2)
        e3 = j3u + j3x @ (0.5 * h * e2)

        x4 = xk + h * k3
        k4 = dynamics(x4, u, model)
        j4x, j4u = jacobian_continuous(x4, u, model)
        d4 = j4x @ (eye + h * d3)
        e4 = j4u + j4x @ (h * e3)

        a_sub = eye + (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
        b_sub = (h / 6.0) * (e1 + 2.0 * e2 + 2.0 * e3 + e4)
        xk = xk + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        phi = a_sub @ phi
        psi = a_sub @ psi + b_sub

    bad = np.flatnonzero(~np.isfinite(xk))
    if bad.size:
        raise IntegrationError(int(bad[0]))
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(psi))):
        raise IntegrationError(-1)
    return DiscreteStep(x_next=xk, a=phi, b=psi)
