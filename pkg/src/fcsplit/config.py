"""Flat key=value configuration layer.

Config files are plain text: one ``dotted.key = value`` per line, ``#``
comments, blank lines ignored.  Comma-separated values parse as tuples.
Every tunable of the plant, cost, constraints, solver, and scenario is
addressable; :func:`default_config` enumerates the complete key set, and
unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .mpc import DemandProfile, ScenarioConfig
from .ocp import ConstraintSet, CostWeights
from .plant import (BatteryParams, CompressorMap, FcParams, PlantModel,
                    Polarization)
from .solver import SolverOptions


class ConfigError(ValueError):
    """Malformed config text or unknown/invalid key."""


_SECTION_TYPES = {
    "fc": FcParams,
    "compressor": CompressorMap,
    "polarization": Polarization,
    "battery": BatteryParams,
    "constraints": ConstraintSet,
}

# solver scalars exposed in config (line_search_steps is derived from the
# halving count instead of being listed literally)
_SOLVER_KEYS = ("max_outer", "max_inner", "reg_init", "reg_min", "reg_max",
                "reg_grow", "reg_shrink", "damping_init", "damping_min",
                "ls_expansions", "armijo", "mu_init", "mu_scale",
                "mu_max", "multiplier_max", "tol_cost", "tol_grad", "tol_viol",
                "tol_comp")

_SCENARIO_KEYS = ("duration", "dt", "n_horizon", "model_substeps",
                  "plant_substeps", "v_soc_init", "lambda_init", "clamp_slack")

_COEFF_KEYS = tuple(f"c{i}" for i in range(1, 17))


def _parse_scalar(tok: str):
    t = tok.strip()
    low = t.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        pass
    return t.strip("\"'")


def parse_config(text: str) -> dict:
    """Parse config text into a flat {dotted key: value} dict."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        toks = val.split(",")
        if len(toks) == 1:
            out[key] = _parse_scalar(toks[0])
        else:
            out[key] = tuple(_parse_scalar(t) for t in toks)
    return out


def default_config() -> dict:
    """The complete key set with built-in default values."""
    cfg = {}
    for prefix, cls in _SECTION_TYPES.items():
        obj = cls()
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            cfg[f"{prefix}.{f.name}"] = tuple(v) if isinstance(v, (tuple, list)) else v
    cfg["model.omega_ref"] = 10000.0
    cfg["model.i_st_eps"] = 1e-3
    cfg["model.lambda_sentinel"] = 1e3

    cfg["weights.w_ref"] = 100.0
    cfg["weights.w_e"] = 0.01
    cfg["weights.w_s_diag"] = (1.0, 1.0, 0.01)

    sc = ScenarioConfig()
    # the scenario carries its own solver defaults (coarser stall
    # tolerance, larger iteration allowance than the library defaults)
    so = sc.solver
    for name in _SOLVER_KEYS:
        cfg[f"solver.{name}"] = getattr(so, name)
    cfg["solver.line_search_halvings"] = len(so.line_search_steps) - 1

    for name in _SCENARIO_KEYS:
        cfg[f"scenario.{name}"] = getattr(sc, name)

    cfg["demand.times"] = tuple(t for t, _ in sc.demand.breakpoints)
    cfg["demand.levels"] = tuple(p for _, p in sc.demand.breakpoints)
    cfg["demand.preview"] = sc.demand.preview
    cfg["demand.mode"] = sc.demand.mode

    cfg["sweep.budgets"] = (72.0, 36.0, 18.0, 3.6)
    cfg["sweep.workers"] = 1
    return cfg


def load_config(path=None, text: str | None = None) -> dict:
    """Defaults merged with user overrides; unknown keys are errors.

    ``model.coeff.cN`` keys are accepted without appearing in the defaults:
    when absent the coefficients are derived from physical parameters.
    """
    cfg = default_config()
    if path is not None:
        with open(path) as fh:
            text = fh.read()
    if text is None:
        return cfg
    user = parse_config(text)
    for key, value in user.items():
        if key.startswith("model.coeff."):
            if key[len("model.coeff."):] not in _COEFF_KEYS:
                raise ConfigError(f"unknown coefficient key {key!r}")
            cfg[key] = float(value)
            continue
        if key not in cfg:
            raise ConfigError(f"unknown config key {key!r}")
        base = cfg[key]
        if isinstance(base, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{key!r} expects true/false")
        elif isinstance(base, int) and not isinstance(base, bool):
            if isinstance(value, float) and not float(value).is_integer():
                raise ConfigError(f"{key!r} expects an integer")
            if not isinstance(value, (int, float)):
                raise ConfigError(f"{key!r} expects an integer")
            value = int(value)
        elif isinstance(base, float):
            if not isinstance(value, (int, float)):
                raise ConfigError(f"{key!r} expects a number")
            value = float(value)
        elif isinstance(base, tuple):
            if not isinstance(value, tuple):
                value = (value,)
        cfg[key] = value
    return cfg


def _section(cfg: dict, prefix: str, cls):
    kwargs = {}
    for f in dataclasses.fields(cls):
        key = f"{prefix}.{f.name}"
        if key in cfg:
            kwargs[f.name] = cfg[key]
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{prefix}] settings: {exc}") from exc


def build_model(cfg: dict) -> PlantModel:
    overrides = {k[len("model.coeff."):]: float(v)
                 for k, v in cfg.items() if k.startswith("model.coeff.")}
    try:
        return PlantModel(
            fc=_section(cfg, "fc", FcParams),
            battery=_section(cfg, "battery", BatteryParams),
            compressor=_section(cfg, "compressor", CompressorMap),
            polarization=_section(cfg, "polarization", Polarization),
            omega_ref=float(cfg["model.omega_ref"]),
            coeff_overrides=overrides or None,
            i_st_eps=float(cfg["model.i_st_eps"]),
            lambda_sentinel=float(cfg["model.lambda_sentinel"]),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid model settings: {exc}") from exc


def build_weights(cfg: dict) -> CostWeights:
    diag = cfg["weights.w_s_diag"]
    if len(diag) != 3:
        raise ConfigError("weights.w_s_diag must have 3 entries")
    try:
        return CostWeights(w_ref=float(cfg["weights.w_ref"]),
                           w_e=float(cfg["weights.w_e"]),
                           w_s=np.diag([float(v) for v in diag]))
    except ValueError as exc:
        raise ConfigError(f"invalid weights: {exc}") from exc


def build_solver_options(cfg: dict) -> SolverOptions:
    halvings = int(cfg["solver.line_search_halvings"])
    if halvings < 0:
        raise ConfigError("solver.line_search_halvings must be >= 0")
    kwargs = {name: cfg[f"solver.{name}"] for name in _SOLVER_KEYS}
    kwargs["line_search_steps"] = tuple(0.5 ** i for i in range(halvings + 1))
    try:
        return SolverOptions(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid solver settings: {exc}") from exc


def build_demand(cfg: dict) -> DemandProfile:
    times = cfg["demand.times"]
    levels = cfg["demand.levels"]
    if len(times) != len(levels):
        raise ConfigError("demand.times and demand.levels must match in length")
    try:
        return DemandProfile(breakpoints=tuple(zip(times, levels)),
                             preview=float(cfg["demand.preview"]),
                             mode=str(cfg["demand.mode"]))
    except ValueError as exc:
        raise ConfigError(f"invalid demand profile: {exc}") from exc


def build_scenario(cfg: dict) -> ScenarioConfig:
    """Assemble the full scenario from a flat config dict."""
    kwargs = {name: cfg[f"scenario.{name}"] for name in _SCENARIO_KEYS}
    try:
        return ScenarioConfig(
            model=build_model(cfg),
            demand=build_demand(cfg),
            weights=build_weights(cfg),
            constraints=_section(cfg, "constraints", ConstraintSet),
            solver=build_solver_options(cfg),
            **kwargs,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid scenario settings: {exc}") from exc


def model_report(model: PlantModel) -> str:
    """Human-readable dump of the derived coefficients and key gains, for
    auditing a configured model."""
    lines = ["derived coefficients:"]
    for name, value in model.coeffs.as_dict().items():
        lines.append(f"  {name:>4s} = {value:.10g}")
    from . import plant
    lines.append("derived gains:")
    lines.append(f"  o2_inlet_mass_fraction = {model.o2_inlet_fraction:.10g}")
    lines.append(f"  oxygen_inflow_gain  [kg/(s Pa)] = {plant.oxygen_inflow_gain(model):.10g}")
    lines.append(f"  oxygen_reaction_gain [kg/(s A)] = {plant.oxygen_reaction_gain(model):.10g}")
    lines.append(f"  hydrogen_rate_per_amp [kg/(s A)] = {plant.hydrogen_rate(1.0, model):.10g}")
    lines.append(f"  battery_pack_charge [A*s] = {model.battery.c_b:.10g}")
    return "\n".join(lines) + "\n"
