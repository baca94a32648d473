import numpy as np
import pytest

from fcsplit.ocp import (CONSTRAINT_ROWS, ConstraintSet, CostWeights,
                         N_CONSTRAINTS, OcpProblem, ROW_SCALES, TERMINAL_ROWS,
                         cost_expansion, describe_constraints,
                         evaluate_constraints, stage_cost)
from fcsplit.plant import N_INPUTS, N_STATES


def test_constraint_row_order_is_frozen():
    # downstream CSV/schema consumers key on this exact order
    assert CONSTRAINT_ROWS == (
        "oxygen_starvation", "compressor_choke", "compressor_surge",
        "v_cm_lower", "v_cm_upper", "i_st_lower", "i_st_upper",
        "i_bat_lower", "i_bat_upper", "discharge_budget",
        "p_o2_nonneg", "cathode_above_atm", "manifold_above_atm")
    assert N_CONSTRAINTS == 13
    assert len(ROW_SCALES) == 13


def test_describe_constraints_schema():
    schema = describe_constraints()
    assert [r["name"] for r in schema["rows"]] == list(CONSTRAINT_ROWS)
    assert [r["index"] for r in schema["rows"]] == list(range(13))
    for r in schema["rows"]:
        assert r["terminal"] == (r["index"] in TERMINAL_ROWS)
        assert r["scale"] == float(ROW_SCALES[r["index"]])
    assert "g <= 0" in schema["convention"]


def test_cost_weights_validation():
    with pytest.raises(ValueError):
        CostWeights(w_ref=0.0)
    with pytest.raises(ValueError):
        CostWeights(w_s=np.zeros((3, 3)))


def test_constraint_set_validation():
    with pytest.raises(ValueError):
        ConstraintSet(i_bat_min=10.0, i_bat_max=-10.0)
    with pytest.raises(ValueError):
        ConstraintSet(q_max=-1.0)


def test_constraints_feasible_at_steady_point(model, operating_point):
    x, u = operating_point
    ev = evaluate_constraints(x, u, ConstraintSet(), model)
    # steady 30 kW operation with an untouched budget satisfies every row
    assert np.all(ev.values <= 1e-9)


def test_constraint_jacobians_match_finite_differences(model, operating_point):
    x0, u0 = operating_point
    cs = ConstraintSet()
    rng = np.random.default_rng(3)
    for _ in range(4):
        x = x0 * (1.0 + 0.03 * rng.uniform(-1, 1, N_STATES))
        x[4] = 0.8
        x[7] = rng.uniform(0.0, 40.0)
        u = u0.copy()
        u[0] *= 1.0 + 0.1 * rng.uniform(-1, 1)
        u[1] *= 1.0 + 0.1 * rng.uniform(-1, 1)
        u[2] = rng.uniform(-30.0, 30.0)
        ev = evaluate_constraints(x, u, cs, model)
        for j in range(N_STATES):
            h = 1e-5 * max(1.0, abs(x[j]))
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            fd = (evaluate_constraints(xp, u, cs, model).values
                  - evaluate_constraints(xm, u, cs, model).values) / (2 * h)
            assert ev.jac_x[:, j] == pytest.approx(fd, rel=1e-4, abs=1e-8)
        for j in range(N_INPUTS):
            h = 1e-5 * max(1.0, abs(u[j]))
            up, um = u.copy(), u.copy()
            up[j] += h
            um[j] -= h
            fd = (evaluate_constraints(x, up, cs, model).values
                  - evaluate_constraints(x, um, cs, model).values) / (2 * h)
            assert ev.jac_u[:, j] == pytest.approx(fd, rel=1e-4, abs=1e-8)


def test_cost_expansion_gradients_match_finite_differences(model, operating_point):
    x, u = operating_point
    w = CostWeights()
    u_ref = u * np.array([0.95, 1.02, 1.0]) + np.array([0.0, 0.0, 4.0])
    p_ref = 31e3
    lx, lu, lxx, luu, lux = cost_expansion(x, u, u - u_ref, p_ref, w, model)

    def f(xx, uu):
        return stage_cost(xx, uu, uu - u_ref, p_ref, w, model)

    for j in range(N_STATES):
        h = 1e-5 * max(1.0, abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        fd = (f(xp, u) - f(xm, u)) / (2 * h)
        assert lx[j] == pytest.approx(fd, rel=5e-4, abs=1e-6)
    for j in range(N_INPUTS):
        h = 1e-6 * max(1.0, abs(u[j]))
        up, um = u.copy(), u.copy()
        up[j] += h
        um[j] -= h
        fd = (f(x, up) - f(x, um)) / (2 * h)
        assert lu[j] == pytest.approx(fd, rel=5e-4, abs=1e-6)
    # curvature blocks are symmetric positive semidefinite (Gauss-Newton)
    assert np.allclose(lxx, lxx.T)
    assert np.all(np.linalg.eigvalsh(luu) > 0.0)
    assert lux.shape == (N_INPUTS, N_STATES)


def _problem(model, operating_point, **kw):
    x, u = operating_point
    return OcpProblem(model=model, n_horizon=5, dt=0.05, x0=x,
                      p_ref=np.full(5, 30e3), u_prev=u, **kw), x, u


def test_problem_state_is_augmented_with_previous_input(model, operating_point):
    prob, x, u = _problem(model, operating_point)
    assert prob.n_x == N_STATES + N_INPUTS
    assert np.array_equal(prob.x0[:N_STATES], x)
    assert np.array_equal(prob.x0[N_STATES:], u)
    # the step carries the applied input into the augmented tail
    u2 = u * 1.01
    x_next = prob.step(prob.x0, u2)
    assert np.array_equal(x_next[N_STATES:], u2)


def test_problem_terminal_rows_use_carried_input(model, operating_point):
    prob, x, u = _problem(model, operating_point)
    g, gx = prob.terminal_constraints(prob.x0)
    ev = evaluate_constraints(x, u, prob.constraints, model)
    assert np.array_equal(g, ev.values[list(TERMINAL_ROWS)])
    assert gx.shape == (len(TERMINAL_ROWS), prob.n_x)
    # input sensitivity lands in the augmented tail columns
    assert np.array_equal(gx[:, N_STATES:],
                          ev.jac_u[list(TERMINAL_ROWS)])


def test_problem_damping_anchors_to_reference_plan(model, operating_point):
    prob, x, u = _problem(model, operating_point)
    # default anchor is the previous input, so du = 0 at u = u_prev
    base = prob.stage_cost(0, prob.x0, u)
    shifted_ref = np.tile(u * 1.1, (5, 1))
    prob2, _, _ = _problem(model, operating_point, ref_inputs=shifted_ref)
    moved = prob2.stage_cost(0, prob2.x0, u)
    du = u - shifted_ref[0]
    assert moved - base == pytest.approx(float(du @ prob.weights.w_s @ du), rel=1e-9)
    assert np.array_equal(prob.step_metric, 2.0 * prob.weights.w_s)


def test_problem_validation_errors(model, operating_point):
    x, _ = operating_point
    with pytest.raises(ValueError):
        OcpProblem(model=model, n_horizon=0, dt=0.05, x0=x, p_ref=np.array([]))
    with pytest.raises(ValueError):
        OcpProblem(model=model, n_horizon=3, dt=0.05, x0=x, p_ref=np.zeros(2))
    with pytest.raises(ValueError):
        OcpProblem(model=model, n_horizon=3, dt=0.05, x0=x[:4],
                   p_ref=np.zeros(3))


def test_problem_bounds_come_from_constraint_set(model, operating_point):
    prob, _, _ = _problem(model, operating_point)
    lo, hi = prob.input_bounds()
    assert np.array_equal(lo, np.array([0.0, 0.0, -36.0]))
    assert np.array_equal(hi, np.array([300.0, 616.0, 36.0]))
