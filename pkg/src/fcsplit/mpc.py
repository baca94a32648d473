"""Receding-horizon closed-loop simulation of the power-split planner.

Each control period builds a finite-horizon OCP from the previewed demand
window, solves it warm-started from the shifted previous solution, applies
the first input to the plant (integrated at a finer substep than the
planner's internal model), and logs the full closed-loop record.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from . import plant as pl
from .discretize import step
from .ocp import (ConstraintSet, CostWeights, N_CONSTRAINTS, OcpProblem,
                  ROW_SCALES, evaluate_constraints)
from .plant import N_INPUTS, N_STATES, P_ATM, PlantModel
from .solver import SolveStatus, SolverOptions, Trajectory, solve

CSV_COLUMNS = ("t", "x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8",
               "u1", "u2", "u3", "P_sys", "P_ref", "lambda_O2", "h2_cum",
               "status", "iters", "wall_ms")

SWEEP_COLUMNS = ("q_max_As", "h2_total_g", "q_dis_final_As",
                 "max_violation", "tracking_rms_W")


@dataclass(frozen=True)
class DemandProfile:
    """Piecewise-constant power demand with a finite preview horizon.

    ``mode`` selects how the preview enters the OCP window:

    * ``"lookahead"`` (default): the window samples the true demand at
      t + k*dt, with knowledge capped ``preview`` seconds ahead.
    * ``"head_shift"``: the whole window is shifted forward by the preview
      time, i.e. samples at t + preview + k*dt.
    """

    breakpoints: tuple   # ((time, level), ...) strictly increasing times
    preview: float = 0.5
    mode: str = "lookahead"

    def __post_init__(self):
        bps = tuple((float(t), float(p)) for t, p in self.breakpoints)
        if not bps:
            raise ValueError("demand profile needs at least one breakpoint")
        times = [t for t, _ in bps]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("breakpoint times must be strictly increasing")
        if any(p < 0.0 for _, p in bps):
            raise ValueError("demand levels must be non-negative")
        if self.mode not in ("lookahead", "head_shift"):
            raise ValueError(f"unknown preview mode {self.mode!r}")
        object.__setattr__(self, "breakpoints", bps)

    def level_at(self, t: float) -> float:
        """Demand level at time t (held beyond the last breakpoint)."""
        level = self.breakpoints[0][1]
        for bt, bp in self.breakpoints:
            if t >= bt:
                level = bp
            else:
                break
        return level


def preview_window(profile: DemandProfile, t: float, n: int, dt: float) -> np.ndarray:
    """Demand reference window of length ``n`` seen by the controller at t."""
    out = np.empty(n)
    for k in range(n):
        if profile.mode == "head_shift":
            tau = t + profile.preview + k * dt
        else:
            tau = t + min(k * dt, profile.preview)
        out[k] = profile.level_at(tau)
    return out


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one closed-loop run needs."""

    model: PlantModel = field(default_factory=PlantModel)
    demand: DemandProfile = field(default_factory=lambda: DemandProfile(
        breakpoints=((0.0, 30e3), (2.0, 37.5e3), (2.2, 43e3))))
    duration: float = 4.0
    dt: float = 0.05
    n_horizon: int = 10
    weights: CostWeights = field(default_factory=CostWeights)
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    # The closed-loop runs use a coarser cost-stall tolerance than the
    # solver's library default and a generous inner-iteration allowance:
    # the very first solve must walk the battery current from zero to its
    # limit along a shallow fuel-substitution valley (small, nearly
    # constant per-iteration gains), while later warm-started solves
    # should stop as soon as progress drops to noise level instead of
    # grinding along near-flat directions.
    solver: SolverOptions = field(default_factory=lambda: SolverOptions(
        tol_cost=1e-5, max_inner=3000))
    model_substeps: int = 5
    plant_substeps: int = 10
    v_soc_init: float = 0.8
    lambda_init: float = 1.5
    # applied-input clamp exceedances below this (scaled) slack do not
    # count as activations: they are within the solver's own tolerance
    clamp_slack: float = 1e-4

    def __post_init__(self):
        if self.duration < self.n_horizon * self.dt:
            raise ValueError("duration must cover at least one horizon")


@dataclass
class SimLog:
    """Closed-loop time series plus solver diagnostics."""

    t: np.ndarray
    states: np.ndarray        # (M, 8) state at the start of each period
    inputs: np.ndarray        # (M, 3) applied input
    p_sys: np.ndarray
    p_ref: np.ndarray
    lambda_o2: np.ndarray
    h2_cum: np.ndarray        # kg
    residuals: np.ndarray     # (M, 13) scaled constraint residuals
    status: list
    inner_iters: np.ndarray
    outer_iters: np.ndarray
    wall_ms: np.ndarray
    clamp_activations: int
    final_state: np.ndarray
    traces: list = field(default_factory=list)

    @property
    def h2_total_kg(self) -> float:
        return float(self.h2_cum[-1]) if len(self.h2_cum) else 0.0

    @property
    def q_dis_final(self) -> float:
        return float(self.final_state[7])

    @property
    def max_violation(self) -> float:
        return float(np.max(self.residuals, initial=0.0))

    def tracking_rms(self, exclude_around: tuple = (), half_width: float = 0.3) -> float:
        """RMS power tracking error [W], optionally masking windows around
        the given event times."""
        mask = np.ones(len(self.t), dtype=bool)
        for ts in exclude_around:
            mask &= np.abs(self.t - ts) > half_width
        if not np.any(mask):
            return 0.0
        err = self.p_sys[mask] - self.p_ref[mask]
        return float(np.sqrt(np.mean(err * err)))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for i in range(len(self.t)):
                row = [f"{self.t[i]:.6g}"]
                row += [f"{v:.12g}" for v in self.states[i]]
                row += [f"{v:.12g}" for v in self.inputs[i]]
                row += [f"{self.p_sys[i]:.12g}", f"{self.p_ref[i]:.12g}",
                        f"{self.lambda_o2[i]:.12g}", f"{self.h2_cum[i]:.12g}",
                        self.status[i], str(int(self.inner_iters[i])),
                        f"{self.wall_ms[i]:.3f}"]
                fh.write(",".join(row) + "\n")


# ---------------------------------------------------------------------------
# steady-state initialization


def _idle_state(model: PlantModel, v_soc: float) -> np.ndarray:
    """Atmospheric-equilibrium state: no flow, ambient cathode composition."""
    c = model.coeffs
    dry = P_ATM - c.c2
    x = np.zeros(N_STATES)
    x[0] = model.fc.y_o2_atm * dry
    x[1] = (1.0 - model.fc.y_o2_atm) * dry
    x[3] = P_ATM
    x[4] = v_soc
    return x


def _cathode_composition(model: PlantModel, i_st: float, head: float):
    """Steady cathode pressures for a given stack current and inlet head.

    Uses the steady O2/N2 balances: the partial-pressure ratio follows from
    f1 = f2 = 0, and the total cathode pressure is pinned by the exit-nozzle
    flow matching the net mass throughput.
    """
    c = model.coeffs
    ratio = (c.c1 * head - c.c7 * i_st) / (c.c8 * head)  # x1/x2
    if ratio <= 0.0:
        raise ValueError("oxygen fully depleted at this operating point")

    def f2_residual(p_ca):
        x2 = (p_ca - c.c2) / (1.0 + ratio)
        x1 = ratio * x2
        w_out = pl.psi_ca(x1, x2, model)
        den = c.c4 * x1 + c.c5 * x2 + c.c6
        return c.c8 * head - c.c3 * x2 * w_out / den

    lo, hi = P_ATM * (1.0 + 1e-12), 60.0 * P_ATM
    if f2_residual(lo) < 0.0:
        raise ValueError("no cathode equilibrium above atmospheric pressure")
    p_ca = optimize.brentq(f2_residual, lo, hi, xtol=1e-6)
    x2 = (p_ca - c.c2) / (1.0 + ratio)
    return ratio * x2, x2, p_ca


def _fc_equilibrium(model: PlantModel, i_st: float, lambda_target: float):
    """FC-subsystem steady state (x1..x4, v_cm) at fixed stack current."""
    c = model.coeffs
    head = lambda_target * pl.oxygen_reaction_gain(model) * i_st / pl.oxygen_inflow_gain(model)
    x1, x2, p_ca = _cathode_composition(model, i_st, head)
    p_sm = p_ca + head
    w_cp = c.c16 * head

    def flow_residual(omega):
        return pl.psi_cm(omega, p_sm, model) - w_cp

    omega = optimize.brentq(flow_residual, 1.0, 1e6, xtol=1e-9)
    comp_head = (p_sm / c.c11) ** c.c12 - 1.0
    v_cm = (c.c9 * omega + c.c10 * omega * comp_head * w_cp) / c.c13
    return np.array([x1, x2, omega, p_sm]), v_cm


def steady_state(model: PlantModel, p_demand: float,
                 lambda_target: float = 1.55, v_soc: float = 0.8):
    """Steady operating point (x, u) delivering ``p_demand`` with zero
    battery current."""
    if p_demand <= 1.0:
        x = _idle_state(model, v_soc)
        return x, np.zeros(N_INPUTS)

    def power_residual(i_st):
        xf, v_cm = _fc_equilibrium(model, i_st, lambda_target)
        x = np.zeros(N_STATES)
        x[0:4] = xf
        x[4] = v_soc
        u = np.array([v_cm, i_st, 0.0])
        return pl.system_power(x, u, model) - p_demand

    # net power is non-monotonic in stack current (compressor parasitics
    # dominate at the top end), so bracket the lowest crossing first
    grid = np.linspace(1.0, model.fc.i_st_max, 64)
    r_lo = power_residual(grid[0])
    hi = None
    for i_hi in grid[1:]:
        r_hi = power_residual(i_hi)
        if r_lo * r_hi <= 0.0:
            hi = i_hi
            break
        r_lo = r_hi
    if hi is None:
        raise ValueError(f"demand {p_demand:.0f} W exceeds deliverable power")
    i_st = optimize.brentq(power_residual, hi - (grid[1] - grid[0]), hi, xtol=1e-8)
    xf, v_cm = _fc_equilibrium(model, i_st, lambda_target)
    x = np.zeros(N_STATES)
    x[0:4] = xf
    x[4] = v_soc
    return x, np.array([v_cm, i_st, 0.0])


# ---------------------------------------------------------------------------
# closed loop


def run_closed_loop(cfg: ScenarioConfig, store_traces: bool = True) -> SimLog:
    """Simulate the receding-horizon controller over the full scenario."""
    model = cfg.model
    n_steps = int(round(cfg.duration / cfg.dt))
    n = cfg.n_horizon

    x, u_ss = steady_state(model, cfg.demand.level_at(0.0),
                           cfg.lambda_init, cfg.v_soc_init)
    warm_inputs = np.tile(u_ss, (n, 1))
    warm_mult = None
    warm_term = None

    lo = cfg.constraints.input_lower()
    hi = cfg.constraints.input_upper()
    slack = cfg.clamp_slack * np.array([100.0, 100.0, 100.0])

    rec_t = np.zeros(n_steps)
    rec_x = np.zeros((n_steps, N_STATES))
    rec_u = np.zeros((n_steps, N_INPUTS))
    rec_psys = np.zeros(n_steps)
    rec_pref = np.zeros(n_steps)
    rec_lam = np.zeros(n_steps)
    rec_h2 = np.zeros(n_steps)
    rec_res = np.zeros((n_steps, N_CONSTRAINTS))
    rec_status = []
    rec_inner = np.zeros(n_steps, dtype=int)
    rec_outer = np.zeros(n_steps, dtype=int)
    rec_wall = np.zeros(n_steps)
    traces = []
    clamp_count = 0
    h2 = 0.0
    u_prev = u_ss.copy()

    for m in range(n_steps):
        t = m * cfg.dt
        # the horizon never plans past the end of the scenario: near the
        # final period it shrinks so the discharge budget cannot be
        # deferred into time that will never be simulated
        n_k = min(n, max(1, n_steps - m))
        window = preview_window(cfg.demand, t, n_k, cfg.dt)
        problem = OcpProblem(model=model, n_horizon=n_k, dt=cfg.dt, x0=x,
                             p_ref=window, weights=cfg.weights,
                             constraints=cfg.constraints,
                             n_substeps=cfg.model_substeps, u_prev=u_prev,
                             ref_inputs=warm_inputs[:n_k])
        t0 = time.perf_counter()
        warm_m = warm_mult[:n_k] if warm_mult is not None else None
        result = solve(problem, Trajectory(np.zeros((n_k + 1, problem.n_x)),
                                           warm_inputs[:n_k]),
                       cfg.solver, warm_m, warm_term)
        wall = (time.perf_counter() - t0) * 1e3

        if result.status is SolveStatus.NUMERICAL_ERROR:
            return _finalize(rec_t, rec_x, rec_u, rec_psys, rec_pref, rec_lam,
                             rec_h2, rec_res, rec_status, rec_inner, rec_outer,
                             rec_wall, clamp_count, x, traces, m)

        if result.status is SolveStatus.LINE_SEARCH_FAILED:
            u_apply = u_prev.copy()
        else:
            u_apply = result.trajectory.inputs[0].copy()

        over = np.maximum(u_apply - hi, lo - u_apply)
        if np.any(over > slack):
            clamp_count += 1
        u_apply = np.clip(u_apply, lo, hi)

        ev = evaluate_constraints(x, u_apply, cfg.constraints, model)
        rec_t[m] = t
        rec_x[m] = x
        rec_u[m] = u_apply
        rec_psys[m] = pl.system_power(x, u_apply, model)
        rec_pref[m] = cfg.demand.level_at(t)
        rec_lam[m] = pl.oxygen_excess_ratio(x, u_apply, model)
        rec_res[m] = ev.values
        rec_status.append(result.status.value)
        rec_inner[m] = result.inner_iterations
        rec_outer[m] = result.outer_iterations
        rec_wall[m] = wall
        if store_traces:
            traces.append(result.trace)

        x = step(x, u_apply, cfg.dt, model, cfg.plant_substeps)
        h2 += cfg.dt * pl.hydrogen_rate(u_apply[1], model)
        rec_h2[m] = h2
        u_prev = u_apply

        # shift warm start: drop the applied input, duplicate the last knot
        warm_inputs = np.vstack([result.trajectory.inputs[1:],
                                 result.trajectory.inputs[-1]])
        if result.multipliers is not None and result.multipliers.size:
            warm_mult = np.vstack([result.multipliers[1:],
                                   result.multipliers[-1]])
        warm_term = result.terminal_multipliers

    return _finalize(rec_t, rec_x, rec_u, rec_psys, rec_pref, rec_lam, rec_h2,
                     rec_res, rec_status, rec_inner, rec_outer, rec_wall,
                     clamp_count, x, traces, n_steps)


def _finalize(t, xs, us, psys, pref, lam, h2, res, status, inner, outer,
              wall, clamps, x_final, traces, m):
    return SimLog(t=t[:m], states=xs[:m], inputs=us[:m], p_sys=psys[:m],
                  p_ref=pref[:m], lambda_o2=lam[:m], h2_cum=h2[:m],
                  residuals=res[:m], status=status[:m],
                  inner_iters=inner[:m], outer_iters=outer[:m],
                  wall_ms=wall[:m], clamp_activations=clamps,
                  final_state=np.array(x_final), traces=traces)


def _run_budget(cfg: ScenarioConfig, q_max: float) -> SimLog:
    run_cfg = replace(cfg, constraints=replace(cfg.constraints, q_max=q_max))
    return run_closed_loop(run_cfg, store_traces=False)


def sweep_qmax(cfg: ScenarioConfig, budgets, workers: int = 1):
    """Run the closed loop for each discharge budget.

    Returns (summary_rows, logs) where summary rows follow
    ``SWEEP_COLUMNS`` and logs maps budget -> SimLog, ordered as given.
    """
    budgets = list(budgets)
    if not budgets:
        raise ValueError("budget list must be non-empty")
    if any(q < 0.0 for q in budgets):
        raise ValueError("budgets must be non-negative")

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            logs = list(pool.map(_run_budget, [cfg] * len(budgets), budgets))
    else:
        logs = [_run_budget(cfg, q) for q in budgets]

    step_times = tuple(t for t, _ in cfg.demand.breakpoints[1:])
    rows = []
    for q, log in zip(budgets, logs):
        rows.append({
            "q_max_As": q,
            "h2_total_g": log.h2_total_kg * 1e3,
            "q_dis_final_As": log.q_dis_final,
            "max_violation": log.max_violation,
            "tracking_rms_W": log.tracking_rms(exclude_around=step_times),
        })
    return rows, dict(zip(budgets, logs))


def sweep_summary_csv(rows, path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(SWEEP_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(f"{r[c]:.12g}" for c in SWEEP_COLUMNS) + "\n")
