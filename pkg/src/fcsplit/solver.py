"""Augmented-Lagrangian iLQR trajectory optimizer.

The inner loop alternates a backward Riccati pass on the linearized
dynamics with a line-searched forward rollout of the nonlinear model; the
outer loop updates constraint multipliers and grows the penalty until the
maximum (scaled) violation falls below tolerance.

The solver is generic over the problem object: anything exposing the
``OcpProblem`` interface (``step``, ``step_with_jacobians``,
``stage_cost``, ``stage_cost_expansion``, ``stage_constraints``,
``terminal_constraints``, ``input_bounds``) can be solved, which is how
the synthetic LQ oracle problems in the test suite are driven through the
same code path.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class SolveStatus(enum.Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"
    LINE_SEARCH_FAILED = "LineSearchFailed"
    NUMERICAL_ERROR = "NumericalError"


@dataclass
class Trajectory:
    """Paired state/input sequences: states (N+1, n_x), inputs (N, n_u)."""

    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.inputs = np.asarray(self.inputs, dtype=float)
        if self.states.shape[0] != self.inputs.shape[0] + 1:
            raise ValueError("states must be one longer than inputs")

    @property
    def horizon(self) -> int:
        return self.inputs.shape[0]

    def copy(self) -> "Trajectory":
        return Trajectory(self.states.copy(), self.inputs.copy())


@dataclass(frozen=True)
class SolverOptions:
    max_outer: int = 12
    max_inner: int = 100
    reg_init: float = 1e-6
    reg_min: float = 1e-9
    reg_max: float = 1e12
    reg_grow: float = 10.0
    reg_shrink: float = 0.5
    # optional extra weight on the problem's input-step damping metric; it
    # follows the same grow/shrink schedule as ``reg``.  Off by default:
    # the step-damping cost term already anchors the iterates.
    damping_init: float = 0.0
    damping_min: float = 0.0
    line_search_steps: tuple = tuple(0.5 ** i for i in range(11))
    # greedy doublings of an accepted full step (see forward_pass)
    ls_expansions: int = 10
    armijo: float = 1e-4
    mu_init: float = 10.0
    mu_scale: float = 10.0
    mu_max: float = 1e10
    multiplier_max: float = 1e8
    tol_cost: float = 1e-6
    tol_grad: float = 1e-7
    tol_viol: float = 1e-4
    # max allowed inactivity margin on rows whose multiplier is positive;
    # larger margins mark the multiplier as stale (see _complementary)
    tol_comp: float = 1e-3

    def __post_init__(self):
        if self.mu_scale <= 1.0:
            raise ValueError("penalty growth factor must exceed 1")


@dataclass
class SolveResult:
    trajectory: Trajectory
    cost: float
    max_violation: float
    inner_iterations: int
    outer_iterations: int
    status: SolveStatus
    trace: list = field(default_factory=list)
    multipliers: np.ndarray | None = None
    terminal_multipliers: np.ndarray | None = None


def rollout(problem, inputs: np.ndarray, x0: np.ndarray | None = None) -> Trajectory:
    """Integrate an input sequence from the problem's initial state."""
    inputs = np.asarray(inputs, dtype=float)
    n = inputs.shape[0]
    x0 = problem.x0 if x0 is None else np.asarray(x0, dtype=float)
    states = np.empty((n + 1, problem.n_x))
    states[0] = x0
    for k in range(n):
        states[k + 1] = problem.step(states[k], inputs[k])
    return Trajectory(states, inputs)


def _al_cost_terms(g: np.ndarray, lam: np.ndarray, mu: float) -> float:
    """Penalty value of the PHR augmented Lagrangian for g <= 0 rows."""
    shifted = lam + mu * g
    active = shifted > 0.0
    val = np.where(active,
                   lam * g + 0.5 * mu * g * g,
                   -lam * lam / (2.0 * mu))
    return float(np.sum(val))


def _evaluate(problem, traj: Trajectory, mult, term_mult, mu: float):
    """True cost, AL cost, and max scaled violation of a nominal trajectory."""
    n = traj.horizon
    cost = 0.0
    al = 0.0
    viol = 0.0
    for k in range(n):
        cost += problem.stage_cost(k, traj.states[k], traj.inputs[k])
        gc = problem.stage_constraints(k, traj.states[k], traj.inputs[k])
        if gc is not None:
            g = gc[0]
            al += _al_cost_terms(g, mult[k], mu)
            viol = max(viol, float(np.max(g, initial=0.0)))
    tc = problem.terminal_constraints(traj.states[n])
    if tc is not None:
        g = tc[0]
        al += _al_cost_terms(g, term_mult, mu)
        viol = max(viol, float(np.max(g, initial=0.0)))
    return cost, cost + al, viol


def _trial_cost(problem, traj: Trajectory, mult, term_mult, mu: float) -> float:
    """AL objective of a candidate trajectory."""
    n = traj.horizon
    total = 0.0
    for k in range(n):
        total += problem.stage_cost(k, traj.states[k], traj.inputs[k])
        gc = problem.stage_constraints(k, traj.states[k], traj.inputs[k])
        if gc is not None:
            total += _al_cost_terms(gc[0], mult[k], mu)
    tc = problem.terminal_constraints(traj.states[n])
    if tc is not None:
        total += _al_cost_terms(tc[0], term_mult, mu)
    return total


def _complementary(problem, traj: Trajectory, mult, term_mult,
                   tol_comp: float) -> bool:
    """Whether every positive multiplier sits on a near-active row.

    Warm-started multipliers can outlive the condition that created them
    (the receding window slides past a transient); without this check the
    stale multiplier keeps exerting a phantom constraint force on a row
    that is strictly inactive, and the solve would still report success.
    Failing the check triggers further outer updates, whose
    ``max(0, mult + mu*g)`` step drives such multipliers to zero at a
    rate that accelerates with penalty growth.
    """
    for k in range(traj.horizon):
        gc = problem.stage_constraints(k, traj.states[k], traj.inputs[k])
        if gc is not None and np.any((mult[k] > 0.0) & (gc[0] < -tol_comp)):
            return False
    tc = problem.terminal_constraints(traj.states[-1])
    if tc is not None and np.any((term_mult > 0.0) & (tc[0] < -tol_comp)):
        return False
    return True


def backward_pass(problem, traj: Trajectory, mult, term_mult, mu: float,
                  reg: float, damping: float = 0.0):
    """Riccati recursion on the AL-augmented quadratic expansion.

    ``damping`` weights the problem's input-step metric (if it exposes
    one) on top of the scalar Levenberg term.  Returns (k_ff, K_fb, dv1,
    dv2) or None when the regularized input Hessian fails to factor.
    """
    n = traj.horizon
    n_x, n_u = problem.n_x, problem.n_u
    reg_mat = reg * np.eye(n_u)
    metric = getattr(problem, "step_metric", None)
    if metric is not None and damping > 0.0:
        reg_mat = reg_mat + damping * metric
    bounds = problem.input_bounds()

    vx = np.zeros(n_x)
    vxx = np.zeros((n_x, n_x))
    tc = problem.terminal_constraints(traj.states[n])
    if tc is not None:
        g, gx = tc
        shifted = term_mult + mu * g
        active = shifted > 0.0
        lam_act = np.where(active, shifted, 0.0)
        vx = gx.T @ lam_act
        vxx = (gx[active].T * mu) @ gx[active] if np.any(active) else vxx

    k_ff = np.empty((n, n_u))
    k_fb = np.empty((n, n_u, n_x))
    dv1 = 0.0
    dv2 = 0.0

    for k in range(n - 1, -1, -1):
        x, u = traj.states[k], traj.inputs[k]
        _, a, b = problem.step_with_jacobians(x, u)
        lx, lu, lxx, luu, lux = problem.stage_cost_expansion(k, x, u)

        gc = problem.stage_constraints(k, x, u)
        if gc is not None:
            g, gx, gu = gc
            shifted = mult[k] + mu * g
            active = shifted > 0.0
            lam_act = np.where(active, shifted, 0.0)
            lx = lx + gx.T @ lam_act
            lu = lu + gu.T @ lam_act
            if np.any(active):
                gxa = gx[active]
                gua = gu[active]
                lxx = lxx + mu * gxa.T @ gxa
                luu = luu + mu * gua.T @ gua
                lux = lux + mu * gua.T @ gxa

        qx = lx + a.T @ vx
        qu = lu + b.T @ vx
        qxx = lxx + a.T @ vxx @ a
        quu = luu + b.T @ vxx @ b
        qux = lux + b.T @ vxx @ a

        quu_reg = quu + reg_mat

        # freeze input dimensions resting on a bound and pushing outward:
        # the forward rollout clamps them anyway, so letting them into the
        # update only corrupts the coupled feedforward of the free inputs
        free = np.ones(n_u, dtype=bool)
        if bounds is not None:
            lo, hi = bounds
            free &= ~((u >= hi - 1e-9) & (qu < 0.0))
            free &= ~((u <= lo + 1e-9) & (qu > 0.0))

        kk = np.zeros(n_u)
        gain = np.zeros((n_u, n_x))
        if np.any(free):
            quu_f = quu_reg[np.ix_(free, free)]
            try:
                chol = np.linalg.cholesky(quu_f)
            except np.linalg.LinAlgError:
                return None
            rhs = np.column_stack([qu[free], qux[free]])
            sol = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
            kk[free] = -sol[:, 0]
            gain[free] = -sol[:, 1:]

        k_ff[k] = kk
        k_fb[k] = gain
        dv1 += float(kk @ qu)
        dv2 += 0.5 * float(kk @ quu @ kk)

        vx = qx + gain.T @ quu @ kk + gain.T @ qu + qux.T @ kk
        vxx = qxx + gain.T @ quu @ gain + gain.T @ qux + qux.T @ gain
        vxx = 0.5 * (vxx + vxx.T)

    return k_ff, k_fb, dv1, dv2


def _rollout_candidate(problem, traj: Trajectory, k_ff, k_fb, alpha: float,
                       bounds, correct):
    """Closed-loop rollout of the control update at step size ``alpha``.

    Returns a Trajectory, or None if the rollout left the model's domain.
    """
    n = traj.horizon
    states = np.empty_like(traj.states)
    inputs = np.empty_like(traj.inputs)
    states[0] = traj.states[0]
    for k in range(n):
        u = (traj.inputs[k] + alpha * k_ff[k]
             + k_fb[k] @ (states[k] - traj.states[k]))
        try:
            if bounds is not None:
                u = np.clip(u, bounds[0], bounds[1])
            if correct is not None:
                u = correct(k, traj.states[k], traj.inputs[k], states[k], u)
                if bounds is not None:
                    u = np.clip(u, bounds[0], bounds[1])
            inputs[k] = u
            states[k + 1] = problem.step(states[k], u)
        except (ArithmeticError, RuntimeError, ValueError):
            return None
    return Trajectory(states, inputs)


def forward_pass(problem, traj: Trajectory, k_ff, k_fb, dv1: float, dv2: float,
                 mult, term_mult, mu: float, j_nominal: float,
                 opts: SolverOptions):
    """Line-searched nonlinear rollout of the control update.

    Tries the configured step sizes in decreasing order and accepts the
    first one whose actual decrease is at least ``armijo`` times the
    quadratic model's prediction.  When the full step is accepted, the
    step size is then greedily doubled as long as the objective keeps
    falling: along nearly flat valleys of the tracking model the
    quadratic prediction saturates at the unit step while the true
    objective keeps descending linearly, and the expansion covers that
    distance in a few rollouts instead of many iterations.

    Returns (new trajectory, new AL cost, alpha) or None when no step is
    accepted.
    """
    bounds = problem.input_bounds()
    correct = getattr(problem, "rollout_correction", None)
    for alpha in opts.line_search_steps:
        cand = _rollout_candidate(problem, traj, k_ff, k_fb, alpha,
                                  bounds, correct)
        if cand is None:
            continue
        try:
            j_new = _trial_cost(problem, cand, mult, term_mult, mu)
        except (ArithmeticError, RuntimeError, ValueError):
            continue
        expected = -(alpha * dv1 + alpha * alpha * dv2)
        actual = j_nominal - j_new
        if expected > 0.0:
            if actual < opts.armijo * expected:
                continue
        elif actual <= 0.0:
            continue
        if alpha == opts.line_search_steps[0]:
            for _ in range(opts.ls_expansions):
                wide = _rollout_candidate(problem, traj, k_ff, k_fb,
                                          2.0 * alpha, bounds, correct)
                if wide is None:
                    break
                try:
                    j_wide = _trial_cost(problem, wide, mult, term_mult, mu)
                except (ArithmeticError, RuntimeError, ValueError):
                    break
                if j_wide >= j_new:
                    break
                cand, j_new, alpha = wide, j_wide, 2.0 * alpha
        return cand, j_new, alpha
    return None


def solve(problem, init: Trajectory | None = None,
          opts: SolverOptions = SolverOptions(),
          multipliers: np.ndarray | None = None,
          terminal_multipliers: np.ndarray | None = None) -> SolveResult:
    """Run the full AL-iLQR loop on ``problem``.

    ``init`` supplies the warm-start input sequence; its states are
    re-rolled from ``problem.x0`` so the nominal is always dynamically
    feasible.  Multiplier arrays may be passed in to warm-start the outer
    loop (receding-horizon reuse).
    """
    n = problem.n_horizon
    if init is None:
        inputs = np.zeros((n, problem.n_u))
    else:
        inputs = np.asarray(init.inputs, dtype=float).copy()
    traj = rollout(problem, inputs)

    probe = problem.stage_constraints(0, traj.states[0], traj.inputs[0])
    n_g = 0 if probe is None else probe[0].shape[0]
    tprobe = problem.terminal_constraints(traj.states[-1])
    n_gt = 0 if tprobe is None else tprobe[0].shape[0]

    mult = np.zeros((n, n_g)) if multipliers is None else np.array(multipliers, dtype=float)
    term_mult = (np.zeros(n_gt) if terminal_multipliers is None
                 else np.array(terminal_multipliers, dtype=float))

    mu = opts.mu_init
    reg = opts.reg_init
    damping = opts.damping_init
    trace = []
    total_inner = 0
    status = SolveStatus.MAX_ITER
    cost, j_al, viol = _evaluate(problem, traj, mult, term_mult, mu)

    for outer in range(opts.max_outer):
        inner_converged = False
        for _ in range(opts.max_inner):
            if total_inner >= opts.max_outer * opts.max_inner:
                break
            bp = None
            while bp is None:
                bp = backward_pass(problem, traj, mult, term_mult, mu, reg, damping)
                if bp is None:
                    reg = max(reg, opts.reg_min) * opts.reg_grow
                    damping = max(damping, opts.damping_min) * opts.reg_grow
                    if reg > opts.reg_max:
                        return SolveResult(traj, cost, viol, total_inner, outer,
                                           SolveStatus.NUMERICAL_ERROR, trace,
                                           mult, term_mult)
            k_ff, k_fb, dv1, dv2 = bp
            grad_norm = float(np.max(np.abs(k_ff))) if n else 0.0
            if grad_norm <= opts.tol_grad:
                total_inner += 1
                inner_converged = True
                break

            fp = forward_pass(problem, traj, k_ff, k_fb, dv1, dv2,
                              mult, term_mult, mu, j_al, opts)
            total_inner += 1
            if fp is None:
                reg = max(reg, opts.reg_min) * opts.reg_grow
                damping = max(damping, opts.damping_min) * opts.reg_grow
                if reg > opts.reg_max:
                    # No descent direction left: stationary for this AL
                    # subproblem or genuinely stuck.
                    expected = -(dv1 + dv2)
                    if abs(expected) <= opts.tol_cost * max(1.0, abs(j_al)):
                        inner_converged = True
                        break
                    return SolveResult(traj, cost, viol, total_inner, outer,
                                       SolveStatus.LINE_SEARCH_FAILED, trace,
                                       mult, term_mult)
                continue

            traj, j_new, alpha = fp
            cost, j_nom, viol = _evaluate(problem, traj, mult, term_mult, mu)
            trace.append({"outer": outer, "inner": total_inner, "cost": cost,
                          "al_objective": j_nom, "violation": viol,
                          "reg": reg, "alpha": alpha})
            reg = max(reg * opts.reg_shrink, opts.reg_min)
            damping = max(damping * opts.reg_shrink, opts.damping_min)
            improve = j_al - j_nom
            j_al = j_nom
            if improve <= opts.tol_cost * max(1.0, abs(j_al)) or \
                    grad_norm <= opts.tol_grad:
                inner_converged = True
                break

        if inner_converged and viol <= opts.tol_viol and \
                _complementary(problem, traj, mult, term_mult, opts.tol_comp):
            status = SolveStatus.CONVERGED
            break

        # outer update: first-order multiplier step, then penalty growth
        for k in range(n):
            gc = problem.stage_constraints(k, traj.states[k], traj.inputs[k])
            if gc is not None:
                mult[k] = np.clip(mult[k] + mu * gc[0], 0.0, opts.multiplier_max)
        tc = problem.terminal_constraints(traj.states[-1])
        if tc is not None:
            term_mult = np.clip(term_mult + mu * tc[0], 0.0, opts.multiplier_max)
        mu = min(mu * opts.mu_scale, opts.mu_max)
        cost, j_al, viol = _evaluate(problem, traj, mult, term_mult, mu)
    else:
        outer = opts.max_outer - 1

    return SolveResult(traj, cost, viol, total_inner, outer + 1, status,
                       trace, mult, term_mult)
