from pathlib import Path

import numpy as np
import pytest

from fcsplit.config import (ConfigError, build_demand, build_model,
                            build_scenario, build_solver_options,
                            build_weights, default_config, load_config,
                            model_report, parse_config)

CONFIG_PATH = Path(__file__).resolve().parents[1] / "configs" / "default.cfg"


def test_parse_config_basics():
    cfg = parse_config("a.b = 1\n# comment\nc.d = 2.5, 3.5\nname = lookahead\n")
    assert cfg == {"a.b": 1, "c.d": (2.5, 3.5), "name": "lookahead"}


def test_parse_config_rejects_malformed_lines():
    with pytest.raises(ConfigError):
        parse_config("just words\n")
    with pytest.raises(ConfigError):
        parse_config("= 3\n")
    with pytest.raises(ConfigError):
        parse_config("a.b = 1\na.b = 2\n")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        load_config(text="weights.w_typo = 1\n")
    with pytest.raises(ConfigError):
        load_config(text="model.coeff.c99 = 1\n")


def test_type_mismatches_rejected():
    with pytest.raises(ConfigError):
        load_config(text="scenario.n_horizon = 10.5\n")
    with pytest.raises(ConfigError):
        load_config(text="solver.tol_cost = not-a-number\n")


def test_shipped_reference_config_matches_builtin_defaults():
    cfg = load_config(path=CONFIG_PATH)
    assert cfg == default_config()


def test_override_reaches_built_objects():
    cfg = load_config(text="\n".join([
        "battery.rser_const = 0.5",
        "weights.w_ref = 42.0",
        "solver.max_inner = 7",
        "constraints.q_max = 18.0",
        "demand.times = 0.0, 1.0",
        "demand.levels = 20000.0, 25000.0",
        "model.coeff.c1 = 3.0",
    ]))
    model = build_model(cfg)
    assert model.battery.rser_const == 0.5
    assert model.coeffs.c1 == 3.0
    assert build_weights(cfg).w_ref == 42.0
    assert build_solver_options(cfg).max_inner == 7
    demand = build_demand(cfg)
    assert demand.breakpoints == ((0.0, 20000.0), (1.0, 25000.0))
    scen = build_scenario(cfg)
    assert scen.constraints.q_max == 18.0


def test_line_search_halvings_expand_to_step_schedule():
    cfg = load_config(text="solver.line_search_halvings = 4\n")
    opts = build_solver_options(cfg)
    assert opts.line_search_steps == tuple(0.5 ** i for i in range(5))
    with pytest.raises(ConfigError):
        build_solver_options(load_config(text="solver.line_search_halvings = -1\n"))


def test_mismatched_demand_lists_rejected():
    cfg = load_config(text="demand.times = 0.0, 1.0\n")
    with pytest.raises(ConfigError):
        build_demand(cfg)


def test_build_scenario_defaults_round_trip(model):
    scen = build_scenario(default_config())
    assert scen.dt == 0.05
    assert scen.n_horizon == 10
    assert scen.duration == 4.0
    assert scen.demand.breakpoints == ((0.0, 30e3), (2.0, 37.5e3), (2.2, 43e3))
    assert scen.model.coeffs.as_dict() == pytest.approx(model.coeffs.as_dict())
    assert np.array_equal(scen.weights.w_s, np.diag([1.0, 1.0, 0.01]))


def test_model_report_lists_all_coefficients(model):
    text = model_report(model)
    for i in range(1, 17):
        assert f"c{i} " in text or f"c{i} =" in text or f" c{i} " in text
    assert "battery_pack_charge" in text
