import numpy as np
import pytest

from fcsplit import plant as pl
from fcsplit.mpc import (DemandProfile, ScenarioConfig, preview_window,
                         run_closed_loop, steady_state, sweep_qmax)
from fcsplit.ocp import ConstraintSet


STANDARD_DEMAND = ((0.0, 30e3), (2.0, 37.5e3), (2.2, 43e3))


def test_demand_profile_validation():
    with pytest.raises(ValueError):
        DemandProfile(breakpoints=())
    with pytest.raises(ValueError):
        DemandProfile(breakpoints=((0.0, 1.0), (0.0, 2.0)))
    with pytest.raises(ValueError):
        DemandProfile(breakpoints=((0.0, -5.0),))
    with pytest.raises(ValueError):
        DemandProfile(breakpoints=((0.0, 1.0),), mode="clairvoyant")


def test_demand_level_held_beyond_last_breakpoint():
    d = DemandProfile(breakpoints=STANDARD_DEMAND)
    assert d.level_at(0.0) == 30e3
    assert d.level_at(1.999) == 30e3
    assert d.level_at(2.0) == 37.5e3
    assert d.level_at(2.1) == 37.5e3
    assert d.level_at(100.0) == 43e3


def test_preview_window_lookahead_caps_knowledge():
    d = DemandProfile(breakpoints=STANDARD_DEMAND, preview=0.5)
    # at t=1.5 no sampled knot reaches the 2.0 s step yet
    assert np.all(preview_window(d, 1.5, 10, 0.05) == 30e3)
    # at t=1.6 the last two knots (t+0.40, t+0.45) land on the step
    w = preview_window(d, 1.6, 10, 0.05)
    assert np.all(w[:8] == 30e3)
    assert np.all(w[8:] == 37.5e3)
    # knowledge is capped: a long horizon cannot see past the preview
    w_long = preview_window(d, 1.4, 30, 0.05)
    assert np.all(w_long == 30e3)


def test_preview_window_head_shift_moves_whole_window():
    d = DemandProfile(breakpoints=STANDARD_DEMAND, preview=0.5,
                      mode="head_shift")
    # at t=1.0 the shifted window spans [1.5, 1.95]: still below the step
    assert np.all(preview_window(d, 1.0, 10, 0.05) == 30e3)
    # at t=1.05 the final knot sits exactly on the 2.0 s step
    w = preview_window(d, 1.05, 10, 0.05)
    assert np.all(w[:9] == 30e3)
    assert w[9] == 37.5e3


def test_scenario_rejects_duration_shorter_than_horizon():
    with pytest.raises(ValueError):
        ScenarioConfig(duration=0.25)


def test_steady_state_residual_is_small(model):
    for p in (20e3, 30e3, 40e3):
        x, u = steady_state(model, p)
        assert pl.system_power(x, u, model) == pytest.approx(p, rel=1e-6)
        dx = pl.dynamics(x, u, model)
        assert np.max(np.abs(dx[:4]) / np.maximum(1.0, np.abs(x[:4]))) < 1e-5


@pytest.fixture(scope="module")
def idle_log(model):
    cfg = ScenarioConfig(
        model=model,
        demand=DemandProfile(breakpoints=((0.0, 0.0),)),
        duration=1.0,
        constraints=ConstraintSet(q_max=0.0),
    )
    return run_closed_loop(cfg, store_traces=False)


def test_idle_scenario_stays_at_rest(idle_log):
    assert all(s == "Converged" for s in idle_log.status)
    assert np.max(np.abs(idle_log.inputs)) < 1e-3
    assert idle_log.h2_total_kg < 1e-9
    assert abs(idle_log.q_dis_final) < 1e-3
    assert idle_log.max_violation <= 1e-4


@pytest.fixture(scope="module")
def short_log(model):
    cfg = ScenarioConfig(
        model=model,
        demand=DemandProfile(breakpoints=((0.0, 30e3),)),
        duration=0.5,
    )
    return run_closed_loop(cfg, store_traces=True)


def test_constant_demand_run_tracks_and_converges(short_log):
    assert all(s == "Converged" for s in short_log.status)
    assert len(short_log.t) == 10
    rel = np.abs(short_log.p_sys - short_log.p_ref) / short_log.p_ref
    assert np.max(rel) < 0.02
    assert short_log.clamp_activations == 0


def test_hydrogen_accumulation_identity(short_log, model):
    # the logged cumulative hydrogen is the step sum of the rate map
    total = 0.0
    for i in range(len(short_log.t)):
        total += 0.05 * pl.hydrogen_rate(short_log.inputs[i, 1], model)
        assert short_log.h2_cum[i] == pytest.approx(total, rel=1e-12)


def test_log_shapes_and_traces(short_log):
    n = len(short_log.t)
    assert short_log.states.shape == (n, 8)
    assert short_log.inputs.shape == (n, 3)
    assert short_log.residuals.shape == (n, 13)
    assert len(short_log.traces) == n
    assert short_log.final_state.shape == (8,)


def test_csv_round_trip(short_log, tmp_path):
    path = tmp_path / "run.csv"
    short_log.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",")[:4] == ["t", "x1", "x2", "x3"]
    assert len(lines) == len(short_log.t) + 1
    first = lines[1].split(",")
    assert float(first[0]) == short_log.t[0]
    assert first[16] == "Converged"


def test_sweep_rejects_bad_budget_lists(model):
    cfg = ScenarioConfig(model=model)
    with pytest.raises(ValueError):
        sweep_qmax(cfg, [])
    with pytest.raises(ValueError):
        sweep_qmax(cfg, [-1.0])


def test_tracking_rms_masks_event_windows(short_log):
    # masking everything returns zero by convention
    masked = short_log.tracking_rms(exclude_around=(0.2,), half_width=10.0)
    assert masked == 0.0
    assert short_log.tracking_rms() >= 0.0
