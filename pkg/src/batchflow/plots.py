"""Render run and sweep figures to image files.

Companion to the CSV output: the same trace rows drawn as timing diagrams.
Matplotlib is imported lazily so the simulation core stays import-light.
"""

from __future__ import annotations

import os
from typing import Sequence

from .kernel import TraceRecord
from .report import RunSummary, section_series
from .scenario import ScenarioNames

FIG_SIZE = (9.0, 5.4)
DPI = 120


def _matplotlib():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _per_tick_flow(records: Sequence[TraceRecord], obj: str,
                   section: str) -> tuple[list[int], list[float]]:
    per_tick: dict[int, float] = {}
    for r in records:
        if r.obj == obj and r.section == section:
            per_tick[r.tick] = per_tick.get(r.tick, 0.0) + r.value
    ticks = sorted(per_tick)
    return ticks, [per_tick[t] for t in ticks]


def render_heater_figure(records: Sequence[TraceRecord],
                         names: ScenarioNames, path: str,
                         target: float | None = 50.0) -> str:
    """Temperature and vessel load over time, one panel each."""
    plt = _matplotlib()
    heater = names.heater
    tmp = section_series(records, heater, "TMP")
    load = section_series(records, heater, "CL")
    fig, (ax_t, ax_l) = plt.subplots(2, 1, sharex=True, figsize=FIG_SIZE)
    ax_t.plot([t for t, _ in tmp], [v for _, v in tmp], lw=0.8,
              color="tab:red")
    if target is not None:
        ax_t.axhline(target, color="grey", lw=0.6, ls="--")
    ax_t.set_ylabel("TMP")
    ax_t.set_title(f"{heater}: batch temperature and load")
    ax_l.plot([t for t, _ in load], [v for _, v in load], lw=0.8,
              color="tab:blue")
    ax_l.set_ylabel("CL")
    ax_l.set_xlabel("tick")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def render_buffer_figure(records: Sequence[TraceRecord],
                         names: ScenarioNames, path: str,
                         low: float | None = None,
                         high: float | None = None) -> str:
    """Buffer level plus the restock inflow that feeds it."""
    plt = _matplotlib()
    buffer_name = names.buffer
    level = section_series(records, buffer_name, "CL")
    ticks, inflow = _per_tick_flow(records, buffer_name, "RT")
    fig, (ax_cl, ax_rt) = plt.subplots(2, 1, sharex=True, figsize=FIG_SIZE)
    ax_cl.plot([t for t, _ in level], [v for _, v in level], lw=0.8,
               color="tab:blue")
    for mark, style in ((low, ":"), (high, "--")):
        if mark is not None:
            ax_cl.axhline(mark, color="grey", lw=0.6, ls=style)
    ax_cl.set_ylabel("CL")
    ax_cl.set_title(f"{buffer_name}: stock level and restock inflow")
    ax_rt.plot(ticks, inflow, lw=0.8, color="tab:green")
    ax_rt.set_ylabel("RT")
    ax_rt.set_xlabel("tick")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def render_run_figures(records: Sequence[TraceRecord], names: ScenarioNames,
                       out_dir: str, target: float | None = 50.0,
                       low: float | None = None,
                       high: float | None = None) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if names.heater is not None:
        written.append(render_heater_figure(
            records, names, os.path.join(out_dir, "heater_timing.png"),
            target=target))
    if names.buffer is not None:
        written.append(render_buffer_figure(
            records, names, os.path.join(out_dir, "buffer_timing.png"),
            low=low, high=high))
    return written


def render_sweep_figure(rows: Sequence[tuple[str, RunSummary]],
                        path: str, param: str) -> str:
    """Mean heating duration and energy per cycle across sweep values."""
    plt = _matplotlib()
    values = [float(label) for label, _ in rows]
    durations = [s.heat_ticks_mean for _, s in rows]
    energies = [s.energy_per_cycle for _, s in rows]
    fig, ax = plt.subplots(figsize=(7.2, 4.6))
    ax.plot(values, durations, "o-", color="tab:red",
            label="heating ticks (mean)")
    ax.set_xlabel(param)
    ax.set_ylabel("heating ticks")
    ax2 = ax.twinx()
    ax2.plot(values, energies, "s--", color="tab:purple",
             label="energy per cycle")
    ax2.set_ylabel("energy per cycle")
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path
