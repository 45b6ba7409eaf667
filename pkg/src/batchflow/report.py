"""Trace reduction: turn raw trace rows into a per-run summary.

Everything in :class:`RunSummary` is derived from trace rows alone, so a
summary can be recomputed later from the CSV on disk without rerunning the
simulation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

from .kernel import QUANTITY_EPS, TraceRecord, trace_digits
from .scenario import ScenarioNames

SUMMARY_COLUMNS = ("param_value", "cycles", "heat_ticks_mean",
                   "heat_ticks_min", "heat_ticks_max", "energy_per_cycle",
                   "cl_min", "cl_max", "delivered", "stop_reason")


@dataclass(frozen=True)
class RunSummary:
    cycles: int = 0
    heat_ticks_mean: float = 0.0
    heat_ticks_min: int = 0
    heat_ticks_max: int = 0
    energy_per_cycle: float = 0.0
    cl_min: float = 0.0
    cl_max: float = 0.0
    delivered: float = 0.0
    stop_reason: str = ""


def read_trace_csv(path: str) -> list[TraceRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["tick", "object", "section", "value"]:
            raise ValueError(f"{path}: not a trace file (header {header!r})")
        for row in reader:
            records.append(TraceRecord(int(row[0]), row[1], row[2],
                                       float(row[3])))
    return records


def section_series(records: Iterable[TraceRecord], obj: str,
                   section: str) -> list[tuple[int, float]]:
    """All (tick, value) rows written to one section, in trace order."""
    return [(r.tick, r.value) for r in records
            if r.obj == obj and r.section == section]


def flow_runs(records: Iterable[TraceRecord], obj: str,
              section: str) -> list[tuple[int, int, float]]:
    """Maximal runs of consecutive-tick deliveries: (first, last, total).

    Multiple deliveries landing on one tick are folded together first.
    """
    per_tick: dict[int, float] = {}
    for r in records:
        if r.obj == obj and r.section == section and r.value != 0.0:
            per_tick[r.tick] = per_tick.get(r.tick, 0.0) + r.value
    runs: list[tuple[int, int, float]] = []
    start = prev = None
    total = 0.0
    for tick in sorted(per_tick):
        if prev is not None and tick == prev + 1:
            prev = tick
            total += per_tick[tick]
        else:
            if prev is not None:
                runs.append((start, prev, total))
            start = prev = tick
            total = per_tick[tick]
    if prev is not None:
        runs.append((start, prev, total))
    return runs


def summarize(records: Sequence[TraceRecord], names: ScenarioNames,
              stop_reason: str = "") -> RunSummary:
    """Reduce one run's trace to its summary figures.

    A heating cycle counts as completed when a discharge run of the heater
    ends with the vessel empty; a discharge still in flight at the end of
    the trace is not counted.
    """
    heater = names.heater
    discharge_runs: list[tuple[int, int, float]] = []
    completed: list[tuple[int, int]] = []
    if heater is not None:
        heater_cl = dict(section_series(records, heater, "CL"))
        discharge_runs = flow_runs(records, heater, "PT")
        for first, last, _total in discharge_runs:
            if abs(heater_cl.get(last, 1.0)) <= QUANTITY_EPS:
                completed.append((first, last))

    heat_ticks: list[int] = []
    energies: list[float] = []
    if heater is not None and completed:
        power_ticks = sorted(
            (r.tick, r.value) for r in records
            if r.obj == heater and r.section == "RP" and r.value != 0.0)
        prev_end = -1
        for first, last in completed:
            in_window = [(t, v) for t, v in power_ticks
                         if prev_end < t <= last]
            heat_ticks.append(len({t for t, _ in in_window}))
            energies.append(sum(v for _, v in in_window))
            prev_end = last

    cl_values = []
    if names.buffer is not None:
        cl_values = [v for _, v in section_series(records, names.buffer, "CL")]

    delivered = 0.0
    if names.sink is not None:
        tot = section_series(records, names.sink, "TOT")
        if tot:
            delivered = tot[-1][1]

    n = len(completed)
    return RunSummary(
        cycles=n,
        heat_ticks_mean=(sum(heat_ticks) / n) if n else 0.0,
        heat_ticks_min=min(heat_ticks) if heat_ticks else 0,
        heat_ticks_max=max(heat_ticks) if heat_ticks else 0,
        energy_per_cycle=(sum(energies) / n) if n else 0.0,
        cl_min=min(cl_values) if cl_values else 0.0,
        cl_max=max(cl_values) if cl_values else 0.0,
        delivered=delivered,
        stop_reason=stop_reason,
    )


def render_summary_rows(rows: Sequence[tuple[str, RunSummary]]) -> str:
    digits = trace_digits()

    def num(value: float) -> str:
        return f"{value:.{digits}g}"

    lines = [",".join(SUMMARY_COLUMNS)]
    for label, s in rows:
        lines.append(",".join([
            label, str(s.cycles), num(s.heat_ticks_mean),
            str(s.heat_ticks_min), str(s.heat_ticks_max),
            num(s.energy_per_cycle), num(s.cl_min), num(s.cl_max),
            num(s.delivered), s.stop_reason,
        ]))
    return "\n".join(lines) + "\n"


def write_summary_csv(path: str,
                      rows: Sequence[tuple[str, RunSummary]]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(render_summary_rows(rows))
