"""Finite-horizon optimal control problem: stage costs, constraint set,
and the expansions the trajectory optimizer consumes.

Constraint convention: every row is normalized to g <= 0 feasible and
scaled by a characteristic magnitude so the augmented-Lagrangian penalties
act uniformly across rows whose raw units span several orders of
magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import plant
from .discretize import DEFAULT_SUBSTEPS, step, step_with_sensitivities
from .plant import N_INPUTS, N_STATES, P_ATM, PlantModel

# Fixed row order of the constraint vector.
CONSTRAINT_ROWS = (
    "oxygen_starvation",   # lambda_min - lambda_O2
    "compressor_choke",    # a1*psi_cm + b1 - p_sm
    "compressor_surge",    # p_sm - a2*psi_cm - b2
    "v_cm_lower",
    "v_cm_upper",
    "i_st_lower",
    "i_st_upper",
    "i_bat_lower",
    "i_bat_upper",
    "discharge_budget",    # q_dis - Q_max
    "p_o2_nonneg",
    "cathode_above_atm",
    "manifold_above_atm",
)
N_CONSTRAINTS = len(CONSTRAINT_ROWS)

# Rows also enforced at the terminal knot.  No input is defined there, so
# the input-dependent starvation row is evaluated with the last knot's
# input (carried in the augmented state); without it the optimal plan
# tends to cut compressor voltage at the end of the window, where the
# resulting pressure drop falls just beyond the horizon, and the receding
# loop slowly follows that dive into starvation.  Input box rows stay
# stage-only (they would merely duplicate the last stage).
TERMINAL_ROWS = (0, 1, 2, 9, 10, 11, 12)

PRESSURE_SCALE = 1e5   # Pa
CURRENT_SCALE = 100.0  # A
VOLTAGE_SCALE = 100.0  # V
CHARGE_SCALE = 100.0   # A*s

ROW_SCALES = np.array([
    1.0,             # starvation, dimensionless
    PRESSURE_SCALE,  # choke
    PRESSURE_SCALE,  # surge
    VOLTAGE_SCALE, VOLTAGE_SCALE,
    CURRENT_SCALE, CURRENT_SCALE,
    CURRENT_SCALE, CURRENT_SCALE,
    CHARGE_SCALE,    # budget
    PRESSURE_SCALE, PRESSURE_SCALE, PRESSURE_SCALE,
])


@dataclass(frozen=True)
class CostWeights:
    """Weights of the tracking, fuel, and step-damping cost terms."""

    w_ref: float = 100.0
    w_e: float = 0.01
    w_s: np.ndarray = field(default_factory=lambda: np.diag([1.0, 1.0, 0.01]))

    def __post_init__(self):
        if self.w_ref <= 0.0:
            raise ValueError("w_ref must be positive")
        if self.w_e < 0.0:
            raise ValueError("w_e must be non-negative")
        ws = np.asarray(self.w_s, dtype=float)
        if ws.shape != (3, 3) or not np.allclose(ws, ws.T):
            raise ValueError("w_s must be a symmetric 3x3 matrix")
        if np.any(np.linalg.eigvalsh(ws) <= 0.0):
            raise ValueError("w_s must be positive definite")
        object.__setattr__(self, "w_s", ws)


@dataclass(frozen=True)
class ConstraintSet:
    """Inequality constraint parameters (bounds from the plant's ratings)."""

    lambda_min: float = 1.5
    choke_slope: float = 2.0e6       # Pa per kg/s
    choke_intercept: float = 0.75 * P_ATM
    surge_slope: float = 3.0e6       # Pa per kg/s
    surge_intercept: float = 1.15 * P_ATM
    v_cm_min: float = 0.0
    v_cm_max: float = 300.0
    i_st_min: float = 0.0
    i_st_max: float = 616.0
    i_bat_min: float = -36.0
    i_bat_max: float = 36.0
    q_max: float = 72.0              # A*s discharge budget
    # smooth sentinel for the starvation row near zero stack current
    i_st_reg: float = 1e-3           # A
    inflow_floor: float = 0.1        # effective O2 inflow offset [kg/s * A-scale]

    def __post_init__(self):
        if self.v_cm_min > self.v_cm_max or self.i_st_min > self.i_st_max \
                or self.i_bat_min > self.i_bat_max:
            raise ValueError("constraint bounds must be ordered min <= max")
        if self.q_max < 0.0:
            raise ValueError("q_max must be non-negative")

    def input_lower(self) -> np.ndarray:
        return np.array([self.v_cm_min, self.i_st_min, self.i_bat_min])

    def input_upper(self) -> np.ndarray:
        return np.array([self.v_cm_max, self.i_st_max, self.i_bat_max])


@dataclass(frozen=True)
class ConstraintEval:
    """Constraint residuals (g <= 0 feasible) and their Jacobians."""

    values: np.ndarray   # (13,)
    jac_x: np.ndarray    # (13, 8)
    jac_u: np.ndarray    # (13, 3)


def stage_cost(x: np.ndarray, u: np.ndarray, du: np.ndarray,
               p_ref_k: float, w: CostWeights, model: PlantModel) -> float:
    """l_ref + l_e + l_s at one knot."""
    err = plant.system_power(x, u, model) - p_ref_k
    du = np.asarray(du, dtype=float)
    return w.w_ref * err * err + w.w_e * u[1] + float(du @ w.w_s @ du)


def cost_expansion(x: np.ndarray, u: np.ndarray, du: np.ndarray,
                   p_ref_k: float, w: CostWeights, model: PlantModel,
                   step_weight_scale: float = 1.0):
    """First/second derivatives of the stage cost w.r.t. (x, u).

    The squared tracking term uses the Gauss-Newton approximation (the
    second derivative of P_sys is dropped), which keeps the curvature
    positive semidefinite.  ``step_weight_scale`` scales the step-damping
    block, mainly for diagnostics; the default includes it fully.
    """
    p, px, pu = plant._system_power_with_grad(x, u, model)
    err = p - p_ref_k
    du = np.asarray(du, dtype=float)
    s = step_weight_scale

    lx = 2.0 * w.w_ref * err * px
    lu = 2.0 * w.w_ref * err * pu + np.array([0.0, w.w_e, 0.0]) + 2.0 * s * (w.w_s @ du)
    lxx = 2.0 * w.w_ref * np.outer(px, px)
    luu = 2.0 * w.w_ref * np.outer(pu, pu) + 2.0 * s * w.w_s
    lux = 2.0 * w.w_ref * np.outer(pu, px)
    return lx, lu, lxx, luu, lux


def evaluate_constraints(x: np.ndarray, u: np.ndarray, cs: ConstraintSet,
                         model: PlantModel) -> ConstraintEval:
    """All constraint residuals at one knot, in the documented row order."""
    c = model.coeffs
    g = np.zeros(N_CONSTRAINTS)
    gx = np.zeros((N_CONSTRAINTS, N_STATES))
    gu = np.zeros((N_CONSTRAINTS, N_INPUTS))

    # 0: oxygen starvation, with a smooth sentinel so the row stays feasible
    # and differentiable as the stack current vanishes.
    k_in = plant.oxygen_inflow_gain(model)
    k_react = plant.oxygen_reaction_gain(model)
    head = x[3] - x[0] - x[1] - c.c2
    denom = k_react * (u[1] + cs.i_st_reg)
    lam = (k_in * head + k_react * cs.inflow_floor) / denom
    g[0] = cs.lambda_min - lam
    gx[0, 0] = k_in / denom
    gx[0, 1] = k_in / denom
    gx[0, 3] = -k_in / denom
    gu[0, 1] = lam * k_react / denom

    # 1, 2: compressor choke and surge lines in the (flow, pressure) plane
    w_cp, dw_domega, dw_dp = plant._psi_cm_with_grad(x[2], x[3], model)
    g[1] = cs.choke_slope * w_cp + cs.choke_intercept - x[3]
    gx[1, 2] = cs.choke_slope * dw_domega
    gx[1, 3] = cs.choke_slope * dw_dp - 1.0
    g[2] = x[3] - cs.surge_slope * w_cp - cs.surge_intercept
    gx[2, 2] = -cs.surge_slope * dw_domega
    gx[2, 3] = 1.0 - cs.surge_slope * dw_dp

    # 3-8: input box bounds
    lo, hi = cs.input_lower(), cs.input_upper()
    for j in range(3):
        g[3 + 2 * j] = lo[j] - u[j]
        gu[3 + 2 * j, j] = -1.0
        g[4 + 2 * j] = u[j] - hi[j]
        gu[4 + 2 * j, j] = 1.0

    # 9: discharge budget
    g[9] = x[7] - cs.q_max
    gx[9, 7] = 1.0

    # 10-12: pressure floors
    g[10] = -x[0]
    gx[10, 0] = -1.0
    g[11] = P_ATM - (x[0] + x[1] + c.c2)
    gx[11, 0] = -1.0
    gx[11, 1] = -1.0
    g[12] = P_ATM - x[3]
    gx[12, 3] = -1.0

    inv = 1.0 / ROW_SCALES
    return ConstraintEval(values=g * inv,
                          jac_x=gx * inv[:, None],
                          jac_u=gu * inv[:, None])


def describe_constraints() -> dict:
    """Machine-readable schema of the constraint rows and scales."""
    return {
        "rows": [
            {"index": i, "name": name, "scale": float(ROW_SCALES[i]),
             "terminal": i in TERMINAL_ROWS}
            for i, name in enumerate(CONSTRAINT_ROWS)
        ],
        "convention": "g <= 0 feasible; residuals divided by scale",
    }


@dataclass(frozen=True)
class OcpProblem:
    """One horizon of the power-split OCP, in the form the solver consumes.

    The step-damping cost acts on the input increment relative to a fixed
    nominal plan, du_k = u_k - ref_inputs[k].  In the receding-horizon
    loop the nominal is the shifted previous plan, so the damping is a
    proximal regularizer: it uniquely pins down directions the fuel and
    tracking terms leave flat (notably how battery charge is allocated
    across knots of equal demand) without pricing input motion between
    consecutive knots, which would distort the converged power split.

    The solver-facing state is augmented with the previous knot's input:
    the first 8 entries are the plant state, the last 3 carry u_{k-1}.
    The augmentation exists for the terminal knot, where input-dependent
    constraint rows are evaluated with the last stage's input (see
    ``TERMINAL_ROWS``).
    """

    model: PlantModel
    n_horizon: int
    dt: float
    x0: np.ndarray             # (8,) plant state at the window head
    p_ref: np.ndarray          # (N,) demand window [W]
    weights: CostWeights = field(default_factory=CostWeights)
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    n_substeps: int = DEFAULT_SUBSTEPS
    u_prev: np.ndarray | None = None
    ref_inputs: np.ndarray | None = None   # (N, 3) damping anchor plan

    def __post_init__(self):
        if self.n_horizon < 1:
            raise ValueError("horizon must contain at least one step")
        p_ref = np.asarray(self.p_ref, dtype=float)
        if p_ref.shape != (self.n_horizon,):
            raise ValueError("p_ref window length must equal the horizon")
        object.__setattr__(self, "p_ref", p_ref)
        plant_x0 = np.asarray(self.x0, dtype=float)
        if plant_x0.shape != (N_STATES,):
            raise ValueError("x0 must be the 8-entry plant state")
        anchor = (np.zeros(N_INPUTS) if self.u_prev is None
                  else np.asarray(self.u_prev, dtype=float))
        if anchor.shape != (N_INPUTS,):
            raise ValueError("u_prev must have one entry per input")
        object.__setattr__(self, "u_prev",
                           None if self.u_prev is None else anchor)
        object.__setattr__(self, "x0", np.concatenate([plant_x0, anchor]))
        ref = (np.tile(anchor, (self.n_horizon, 1))
               if self.ref_inputs is None
               else np.asarray(self.ref_inputs, dtype=float))
        if ref.shape != (self.n_horizon, N_INPUTS):
            raise ValueError("ref_inputs must be (horizon, n_inputs)")
        object.__setattr__(self, "ref_inputs", ref)

    # --- solver interface -------------------------------------------------

    @property
    def n_x(self) -> int:
        return N_STATES + N_INPUTS

    @property
    def n_u(self) -> int:
        return N_INPUTS

    def step(self, x, u):
        x_next = step(x[:N_STATES], u, self.dt, self.model, self.n_substeps)
        return np.concatenate([x_next, u])

    def step_with_jacobians(self, x, u):
        d = step_with_sensitivities(x[:N_STATES], u, self.dt, self.model,
                                    self.n_substeps)
        n = N_STATES + N_INPUTS
        a = np.zeros((n, n))
        a[:N_STATES, :N_STATES] = d.a
        b = np.zeros((n, N_INPUTS))
        b[:N_STATES] = d.b
        b[N_STATES:] = np.eye(N_INPUTS)
        return np.concatenate([d.x_next, u]), a, b

    def stage_cost(self, k, x, u):
        return stage_cost(x[:N_STATES], u, u - self.ref_inputs[k],
                          self.p_ref[k], self.weights, self.model)

    def stage_cost_expansion(self, k, x, u):
        lx, lu, lxx, luu, lux = cost_expansion(
            x[:N_STATES], u, u - self.ref_inputs[k], self.p_ref[k],
            self.weights, self.model)
        n = N_STATES + N_INPUTS
        lx_a = np.zeros(n)
        lx_a[:N_STATES] = lx
        lxx_a = np.zeros((n, n))
        lxx_a[:N_STATES, :N_STATES] = lxx
        lux_a = np.zeros((N_INPUTS, n))
        lux_a[:, :N_STATES] = lux
        return lx_a, lu, lxx_a, luu, lux_a

    @property
    def step_metric(self) -> np.ndarray:
        """Input-step damping metric (Hessian of the l_s term)."""
        return 2.0 * self.weights.w_s

    def rollout_correction(self, k, x_ref, u_ref, x, u):
        """Rebalance the stack current during a trial rollout.

        The quadratic cost model sees the system power only to first
        order, so a coordinated control update leaves a second-order
        power residual that the steep tracking weight punishes far more
        than the update gains elsewhere, stalling the line search at
        tiny steps.  Nudging the stack current until the realized power
        matches the local linear model's prediction removes exactly that
        residual; the nudge vanishes quadratically as the update shrinks,
        so stationary points are unchanged.
        """
        xp_ref, xp = x_ref[:N_STATES], x[:N_STATES]
        p0, px0, pu0 = plant._system_power_with_grad(xp_ref, u_ref, self.model)
        target = p0 + px0 @ (xp - xp_ref) + pu0 @ (u - u_ref)
        u = np.array(u, dtype=float)
        lo, hi = self.constraints.i_st_min, self.constraints.i_st_max
        for _ in range(2):
            p, _, pu = plant._system_power_with_grad(xp, u, self.model)
            if abs(pu[1]) < 1e-6:
                break
            u[1] = min(max(u[1] + (target - p) / pu[1], lo), hi)
        return u

    def _pad_jac_x(self, gx):
        out = np.zeros((gx.shape[0], N_STATES + N_INPUTS))
        out[:, :N_STATES] = gx
        return out

    def stage_constraints(self, k, x, u):
        ev = evaluate_constraints(x[:N_STATES], u, self.constraints, self.model)
        return ev.values, self._pad_jac_x(ev.jac_x), ev.jac_u

    def terminal_constraints(self, x):
        u_last = x[N_STATES:]
        ev = evaluate_constraints(x[:N_STATES], u_last, self.constraints,
                                  self.model)
        rows = list(TERMINAL_ROWS)
        gx = np.zeros((len(rows), N_STATES + N_INPUTS))
        gx[:, :N_STATES] = ev.jac_x[rows]
        gx[:, N_STATES:] = ev.jac_u[rows]
        return ev.values[rows], gx

    def input_bounds(self):
        return self.constraints.input_lower(), self.constraints.input_upper()
