"""Run-level invariant checks: conservation, determinism, cycle discipline.

These power the ``validate`` command and the heavier end of the test suite.
Each check returns a :class:`CheckResult` instead of raising, so a report
can list every failure at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .kernel import QUANTITY_EPS, Engine, SectionKind, TraceRecord
from .mechanisms import HeaterTank
from .report import flow_runs, section_series
from .scenario import (DeliverySink, ScenarioConfig, ScenarioNames, build,
                       discover_names)
from .systems import BufferStore, StockSource
from .thermal import MODE_LEGACY, check_stability

# Sections that carry product between objects; sensor taps use other names.
_TRANSIT_SECTIONS = ("RT", "PT")


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class AuditResult:
    baseline: float = 0.0
    max_drift: float = 0.0
    starvation_ticks: int = 0
    buffer_min: float = 0.0
    buffer_max: float = 0.0
    ticks_run: int = 0
    stop_reason: str = ""


def liquid_total(engine: Engine) -> float:
    """Product currently anywhere in the line, clipped overflow included."""
    total = 0.0
    for obj in engine.objects.values():
        mech = obj.mech
        if isinstance(mech, (BufferStore, StockSource)):
            total += mech.stock
        elif isinstance(mech, HeaterTank):
            total += mech.state.m_w
        elif isinstance(mech, DeliverySink):
            total += mech.total
        if isinstance(mech, BufferStore):
            total += mech.overflow_total
        for name in _TRANSIT_SECTIONS:
            sec = obj.sections.get(name)
            if sec is not None and sec.kind is SectionKind.FLOW:
                total += sec.value
    return total


def restock_delay(engine: Engine, buffer_name: str) -> int:
    """Ticks between a restock delivery's trace row and its intake.

    A delivery row is stamped when the connection is serviced.  If that
    connection sits after the buffer in the service order, the buffer only
    reads the value on the following tick.
    """
    obj_pos = conn_pos = None
    for i, (tag, payload) in enumerate(engine.service_order):
        if tag == "obj" and payload.name == buffer_name:
            obj_pos = i
        elif (tag == "conn" and payload.tgt.owner == buffer_name
              and payload.tgt.name == "RT"):
            conn_pos = i
    if obj_pos is None or conn_pos is None:
        return 0
    return 1 if conn_pos > obj_pos else 0


def run_audited(config: ScenarioConfig, ticks: int | None = None,
                overrides: Mapping[str, float] | None = None,
                trace_enabled: bool = True,
                on_tick: Callable[[Engine], None] | None = None
                ) -> tuple[Engine, AuditResult]:
    """Run a scenario stepwise, auditing mass and buffer state every tick."""
    engine = build(config, overrides=overrides, trace_enabled=trace_enabled)
    max_ticks = config.run.max_ticks if ticks is None else ticks
    audit = AuditResult()
    audit.baseline = liquid_total(engine)

    buffers = [obj.mech for obj in engine.objects.values()
               if isinstance(obj.mech, BufferStore)]
    first = True
    while engine.tick < max_ticks and not engine.stop_requested:
        engine.step()
        drift = abs(liquid_total(engine) - audit.baseline)
        if drift > audit.max_drift:
            audit.max_drift = drift
        for buf in buffers:
            if buf.stock == 0.0 and buf.pending > 0.0:
                audit.starvation_ticks += 1
            if first or buf.stock < audit.buffer_min:
                audit.buffer_min = buf.stock
            if first or buf.stock > audit.buffer_max:
                audit.buffer_max = buf.stock
            first = False
        if on_tick is not None:
            on_tick(engine)
    audit.ticks_run = engine.tick
    audit.stop_reason = engine.stop_reason or "max_ticks"
    return engine, audit


# -- individual checks -----------------------------------------------------

def check_conservation(audit: AuditResult, tolerance: float = 1e-9
                       ) -> CheckResult:
    ok = audit.max_drift <= tolerance
    return CheckResult(
        "conservation", ok,
        f"max per-tick drift {audit.max_drift:.3e} over {audit.ticks_run} "
        f"ticks (tolerance {tolerance:g})")


def check_determinism(config: ScenarioConfig, ticks: int | None = None,
                      overrides: Mapping[str, float] | None = None
                      ) -> CheckResult:
    from .kernel import render_trace
    texts = []
    for _ in range(2):
        engine = build(config, overrides=overrides)
        engine.run(config.run.max_ticks if ticks is None else ticks)
        texts.append(render_trace(engine.trace))
    ok = texts[0] == texts[1]
    return CheckResult(
        "determinism", ok,
        f"two runs, {len(texts[0])} bytes each, "
        f"{'identical' if ok else 'DIFFER'}")


def completed_cycles(records: Sequence[TraceRecord],
                     names: ScenarioNames) -> list[tuple[int, int]]:
    """(first, last) tick of each discharge run that emptied the heater."""
    if names.heater is None:
        return []
    cl = dict(section_series(records, names.heater, "CL"))
    out = []
    for first, last, _total in flow_runs(records, names.heater, "PT"):
        if abs(cl.get(last, 1.0)) <= QUANTITY_EPS:
            out.append((first, last))
    return out


def check_cycle_structure(records: Sequence[TraceRecord],
                          names: ScenarioNames) -> CheckResult:
    """Each cycle must order fill, heat, threshold hit, discharge."""
    if names.heater is None or names.comparator is None:
        return CheckResult("cycle_structure", True, "no heater role; skipped")
    cycles = completed_cycles(records, names)
    if not cycles:
        return CheckResult("cycle_structure", False, "no completed cycle")
    fills = flow_runs(records, names.heater, "RT")
    powers = flow_runs(records, names.heater, "RP")
    fires = {t for t, v in section_series(records, names.comparator, "OUT")
             if v != 0.0}
    n = len(cycles)
    if len(fills) < n or len(powers) < n:
        return CheckResult(
            "cycle_structure", False,
            f"{n} cycles but {len(fills)} fill runs and {len(powers)} "
            f"power runs")
    for k in range(n):
        fill_end = fills[k][1]
        power_first, power_last, _ = powers[k]
        discharge_first = cycles[k][0]
        ordered = fill_end < power_first <= power_last < discharge_first
        if not ordered:
            return CheckResult(
                "cycle_structure", False,
                f"cycle {k}: fill end {fill_end}, power {power_first}.."
                f"{power_last}, discharge from {discharge_first} out of "
                f"order")
        # Power stops because the threshold fired, so the run's final tick
        # must carry a comparator hit.
        if power_last not in fires:
            return CheckResult(
                "cycle_structure", False,
                f"cycle {k}: power run ends at {power_last} with no "
                f"threshold hit there")
    return CheckResult("cycle_structure", True, f"{n} cycles well ordered")


def check_temperature_shape(records: Sequence[TraceRecord],
                            names: ScenarioNames, target: float = 50.0,
                            ambient: float = 20.0) -> CheckResult:
    """Per cycle the temperature must reach the target, then fall back.

    After the threshold tick the published temperature may never rise until
    the next heating phase begins, and just before that next phase it must
    be back at ambient.
    """
    if names.heater is None:
        return CheckResult("temperature_shape", True, "no heater; skipped")
    cycles = completed_cycles(records, names)
    if not cycles:
        return CheckResult("temperature_shape", False, "no completed cycle")
    tmp = section_series(records, names.heater, "TMP")
    by_tick = dict(tmp)
    powers = flow_runs(records, names.heater, "RP")
    if len(powers) < len(cycles):
        return CheckResult("temperature_shape", False,
                           f"{len(cycles)} cycles but only {len(powers)} "
                           f"heating runs")
    for k, (_first, last) in enumerate(cycles):
        # Peak within the cycle's power run.
        power_first, power_last, _ = powers[k]
        window = [by_tick[t] for t in range(power_first, power_last + 1)
                  if t in by_tick]
        if not window:
            return CheckResult("temperature_shape", False,
                               f"cycle {k}: no temperature rows during "
                               f"heating")
        peak = max(window)
        if peak < target:
            return CheckResult("temperature_shape", False,
                               f"cycle {k}: peak {peak:.3f} below {target}")
        next_start = powers[k + 1][0] if k + 1 < len(powers) else None
        end = next_start if next_start is not None else tmp[-1][0] + 1
        prev = None
        for t in range(power_last, end):
            v = by_tick.get(t)
            if v is None:
                continue
            if prev is not None and v > prev + 1e-9:
                return CheckResult(
                    "temperature_shape", False,
                    f"cycle {k}: temperature rose {prev:.6f} -> {v:.6f} "
                    f"at tick {t} outside heating")
            prev = v
        if next_start is not None:
            settled = by_tick.get(next_start - 1)
            if settled is None or abs(settled - ambient) > 1e-6:
                return CheckResult(
                    "temperature_shape", False,
                    f"cycle {k}: {settled!r} not back at ambient before "
                    f"next heating phase")
    return CheckResult("temperature_shape", True,
                       f"{len(cycles)} cycles reach {target} and settle")


def check_buffer_discipline(records: Sequence[TraceRecord],
                            names: ScenarioNames, low: float,
                            high: float, inflow_delay: int = 0
                            ) -> CheckResult:
    """Replays the buffer's request rule tick by tick against the trace.

    A restock request must appear exactly when the level reads below the
    low mark with no request outstanding; outstanding clears when a restock
    inflow run completes.  The level must stay inside [0, high] and rise
    only while restock inflow arrives.  ``inflow_delay`` shifts delivery
    rows onto the tick the buffer actually reads them (see
    :func:`restock_delay`).
    """
    buf = names.buffer
    if buf is None:
        return CheckResult("buffer_discipline", True, "no buffer; skipped")
    cl = section_series(records, buf, "CL")
    if not cl:
        return CheckResult("buffer_discipline", False, "no level trace")
    inflow_ticks = {r.tick + inflow_delay for r in records
                    if r.obj == buf and r.section == "RT" and r.value != 0.0}
    request_ticks = {t for t, v in section_series(records, buf, "UTP")
                     if v != 0.0}
    inflow_runs = [(first + inflow_delay, last + inflow_delay, total)
                   for first, last, total in flow_runs(records, buf, "RT")]

    outstanding = False
    rt_mem = False
    for tick, level in cl:
        if level < -QUANTITY_EPS or level > high + QUANTITY_EPS:
            return CheckResult(
                "buffer_discipline", False,
                f"level {level:.6f} outside [0, {high}] at tick {tick}")
        if tick in inflow_ticks:
            rt_mem = True
        elif rt_mem:
            rt_mem = False
            outstanding = False
        should_fire = level < low and not outstanding
        fired = tick in request_ticks
        if fired != should_fire:
            return CheckResult(
                "buffer_discipline", False,
                f"tick {tick}: request {'fired' if fired else 'missing'} "
                f"with level {level:.6f}, outstanding={outstanding}")
        if should_fire:
            outstanding = True

    by_tick = dict(cl)
    ticks_sorted = sorted(by_tick)
    in_run = [False] * (ticks_sorted[-1] + 1) if ticks_sorted else []
    for first, last, _ in inflow_runs:
        for t in range(first, min(last, len(in_run) - 1) + 1):
            in_run[t] = True
    prev = None
    for tick in ticks_sorted:
        v = by_tick[tick]
        if prev is not None:
            rising = v > prev + QUANTITY_EPS
            if rising and not (tick < len(in_run) and in_run[tick]):
                return CheckResult(
                    "buffer_discipline", False,
                    f"level rose {prev:.6f} -> {v:.6f} at tick {tick} "
                    f"with no restock inflow")
        prev = v
    for first, last, _ in inflow_runs:
        before = by_tick.get(first - 1)
        after = by_tick.get(last)
        if before is not None and after is not None and after <= before:
            return CheckResult(
                "buffer_discipline", False,
                f"restock over ticks {first}..{last} left the level at "
                f"{after:.6f} (was {before:.6f})")
    return CheckResult(
        "buffer_discipline", True,
        f"{len(request_ticks)} requests, {len(inflow_runs)} restocks, "
        f"level within [0, {high}]")


def run_validation(config: ScenarioConfig, ticks: int | None = None
                   ) -> list[CheckResult]:
    """The full invariant suite for one scenario config."""
    results: list[CheckResult] = []
    try:
        check_stability(config.thermal_params())
        results.append(CheckResult("thermal_stability", True,
                                   "per-tick loss coefficient below 1"))
    except Exception as exc:
        results.append(CheckResult("thermal_stability", False, str(exc)))
        return results

    names = discover_names(config)
    by_name = config.object_map()
    engine, audit = run_audited(config, ticks=ticks)
    results.append(check_conservation(audit))
    results.append(check_determinism(config, ticks=ticks))
    results.append(check_cycle_structure(engine.trace, names))
    if config.run.thermal_mode == MODE_LEGACY:
        # The uncorrected update gains heat from the ambient term alone, so
        # the cool-down / settle profile does not apply to it.
        results.append(CheckResult(
            "temperature_shape", True,
            "legacy thermal form; cool-down profile not applicable"))
    else:
        target = 50.0
        if names.comparator is not None:
            target = by_name[names.comparator].overrides.get("IN1", 50.0)
        ambient = 20.0
        if names.heater is not None:
            ambient = by_name[names.heater].overrides.get("TE", 20.0)
        results.append(check_temperature_shape(
            engine.trace, names, target=target, ambient=ambient))
    if names.buffer is not None:
        spec = by_name[names.buffer]
        low = spec.overrides.get("LL", 1.2)
        high = spec.overrides.get("HL", 2.0)
        delay = restock_delay(engine, names.buffer)
        results.append(check_buffer_discipline(engine.trace, names,
                                               low, high,
                                               inflow_delay=delay))
    return results
