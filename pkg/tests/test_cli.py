from pathlib import Path

import pytest

from fcsplit.cli import main

CHEAP_CONFIG = """\
scenario.duration = 0.5
demand.times = 0.0
demand.levels = 30000.0
"""

# an early demand step with a starved iteration budget cannot converge
STARVED_CONFIG = """\
scenario.duration = 0.5
demand.times = 0.0, 0.1
demand.levels = 30000.0, 43000.0
solver.max_outer = 1
solver.max_inner = 2
"""


@pytest.fixture(scope="module")
def cheap_cfg_path(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "cheap.cfg"
    p.write_text(CHEAP_CONFIG)
    return p


def _read_without_wall(path: Path):
    # wall_ms is the only column exempt from byte-stability
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    assert header[-1] == "wall_ms"
    return [",".join(l.split(",")[:-1]) for l in lines]


def test_simulate_writes_artifacts_and_exits_zero(cheap_cfg_path, tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["simulate", "--config", str(cheap_cfg_path),
                 "--out", str(out)])
    assert code == 0
    assert (out / "run.csv").exists()
    assert (out / "summary.txt").exists()
    assert (out / "model_ledger.txt").exists()
    assert "total hydrogen" in capsys.readouterr().out


def test_simulate_output_is_reproducible(cheap_cfg_path, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(cheap_cfg_path),
                 "--out", str(out_a)]) == 0
    assert main(["simulate", "--config", str(cheap_cfg_path),
                 "--out", str(out_b)]) == 0
    assert (_read_without_wall(out_a / "run.csv")
            == _read_without_wall(out_b / "run.csv"))
    assert ((out_a / "summary.txt").read_text()
            == (out_b / "summary.txt").read_text())


def test_simulate_emit_plots_renders_figures(cheap_cfg_path, tmp_path):
    out = tmp_path / "run"
    code = main(["simulate", "--config", str(cheap_cfg_path),
                 "--out", str(out), "--emit-plots"])
    assert code == 0
    pngs = list(out.glob("*.png"))
    assert pngs, "no figures were rendered"


def test_simulate_nonconverging_run_exits_two(tmp_path):
    cfg = tmp_path / "starved.cfg"
    cfg.write_text(STARVED_CONFIG)
    out = tmp_path / "run"
    code = main(["simulate", "--config", str(cfg), "--out", str(out)])
    assert code == 2
    # the run record is still written for post-mortem inspection
    assert (out / "run.csv").exists()


def test_bad_config_exits_one_and_leaves_no_outputs(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("weights.w_typo = 1\n")
    out = tmp_path / "never"
    code = main(["simulate", "--config", str(cfg), "--out", str(out)])
    assert code == 1
    assert not out.exists()
    assert "error:" in capsys.readouterr().err


def test_missing_config_file_exits_one(tmp_path):
    code = main(["simulate", "--config", str(tmp_path / "nope.cfg"),
                 "--out", str(tmp_path / "out")])
    assert code == 1


def test_sweep_writes_per_budget_and_summary(cheap_cfg_path, tmp_path):
    out = tmp_path / "sweep"
    code = main(["sweep", "--config", str(cheap_cfg_path),
                 "--out", str(out), "--budgets", "72,36"])
    assert code == 0
    assert (out / "budget_72.csv").exists()
    assert (out / "budget_36.csv").exists()
    assert (out / "model_ledger.txt").exists()
    summary = (out / "sweep_summary.csv").read_text().splitlines()
    assert summary[0] == "q_max_As,h2_total_g,q_dis_final_As,max_violation,tracking_rms_W"
    assert len(summary) == 3


def test_sweep_rejects_empty_budget_list(cheap_cfg_path, tmp_path):
    out = tmp_path / "sweep"
    code = main(["sweep", "--config", str(cheap_cfg_path),
                 "--out", str(out), "--budgets", ","])
    assert code == 1
    assert not out.exists()


def test_describe_constraints_lists_all_rows(capsys):
    assert main(["describe-constraints"]) == 0
    out = capsys.readouterr().out
    for name in ("oxygen_starvation", "compressor_choke", "compressor_surge",
                 "discharge_budget", "manifold_above_atm"):
        assert name in out


def test_selfcheck_passes_and_corrupt_control_fails(capsys):
    assert main(["selfcheck"]) == 0
    assert "PASS" in capsys.readouterr().out
    assert main(["selfcheck", "--corrupt-jacobians"]) == 3
    assert "FAIL" in capsys.readouterr().out
