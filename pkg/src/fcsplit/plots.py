"""Figure rendering for closed-loop runs and budget sweeps.

All functions write PNG files and return the written path; the Agg
backend is forced so rendering works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .mpc import SimLog


def plot_tracking(log: SimLog, path, step_times=()) -> str:
    """Demand vs delivered power, with the oxygen excess ratio below."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    ax1.plot(log.t, log.p_ref / 1e3, drawstyle="steps-post",
             color="k", lw=1.0, label="demand")
    ax1.plot(log.t, log.p_sys / 1e3, color="tab:blue", lw=1.5,
             label="delivered")
    ax1.set_ylabel("power [kW]")
    ax1.legend(loc="upper left")
    ax2.plot(log.t, log.lambda_o2, color="tab:green", lw=1.5)
    ax2.axhline(1.5, color="tab:red", ls="--", lw=1.0, label="lower bound")
    ax2.set_ylabel(r"oxygen excess ratio")
    ax2.set_xlabel("time [s]")
    ax2.legend(loc="upper right")
    for ax in (ax1, ax2):
        for ts in step_times:
            ax.axvline(ts, color="0.7", ls=":", lw=0.8)
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return str(path)


def plot_inputs(log: SimLog, path, step_times=()) -> str:
    """Applied inputs: compressor voltage, stack current, battery current."""
    labels = ("compressor voltage [V]", "stack current [A]",
              "battery current [A]")
    fig, axes = plt.subplots(3, 1, figsize=(8, 7), sharex=True)
    for j, (ax, label) in enumerate(zip(axes, labels)):
        ax.plot(log.t, log.inputs[:, j], lw=1.5)
        ax.set_ylabel(label)
        for ts in step_times:
            ax.axvline(ts, color="0.7", ls=":", lw=0.8)
        ax.grid(alpha=0.3)
    axes[-1].set_xlabel("time [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return str(path)


def plot_discharge(logs: dict, path, step_times=()) -> str:
    """Cumulative battery discharge per budget, with budget lines."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for q, log in logs.items():
        (line,) = ax.plot(log.t, log.states[:, 7], lw=1.5,
                          label=f"budget {q:g} A·s")
        ax.axhline(q, color=line.get_color(), ls="--", lw=0.8, alpha=0.6)
    for ts in step_times:
        ax.axvline(ts, color="0.7", ls=":", lw=0.8)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("cumulative discharge [A·s]")
    ax.legend(loc="upper left")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return str(path)


def plot_hydrogen(logs: dict, path) -> str:
    """Total hydrogen use per budget (bar) and cumulative traces."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4.5))
    budgets = list(logs.keys())
    totals = [logs[q].h2_total_kg * 1e3 for q in budgets]
    ax1.bar([f"{q:g}" for q in budgets], totals, color="tab:blue")
    ax1.set_xlabel("discharge budget [A·s]")
    ax1.set_ylabel("hydrogen consumed [g]")
    ax1.grid(alpha=0.3, axis="y")
    for q in budgets:
        ax2.plot(logs[q].t, logs[q].h2_cum * 1e3, lw=1.5,
                 label=f"budget {q:g} A·s")
    ax2.set_xlabel("time [s]")
    ax2.set_ylabel("cumulative hydrogen [g]")
    ax2.legend(loc="upper left")
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return str(path)


def render_run(log: SimLog, out_dir, prefix: str = "run", step_times=()) -> list:
    """Render the single-run figure set into ``out_dir``."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [
        plot_tracking(log, out / f"{prefix}_tracking.png", step_times),
        plot_inputs(log, out / f"{prefix}_inputs.png", step_times),
    ]


def render_sweep(logs: dict, out_dir, step_times=()) -> list:
    """Render the sweep figure set (per-run figures plus comparisons)."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for q, log in logs.items():
        written += render_run(log, out, prefix=f"budget_{q:g}",
                              step_times=step_times)
    written.append(plot_discharge(logs, out / "sweep_discharge.png",
                                  step_times))
    written.append(plot_hydrogen(logs, out / "sweep_hydrogen.png"))
    return written
