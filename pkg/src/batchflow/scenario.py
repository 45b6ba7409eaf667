"""Config parsing and scenario assembly.

The config format is line oriented.  ``[objects]`` declares instances
(``name = kind``) and presets (``name.SEC = value``), ``[connections]``
wires sections (``A.SEC -> B.SEC``), ``[thermal]`` and ``[run]`` hold the
vessel constants and run controls, and an optional ``[service_order]``
section pins the per-tick service list explicitly.  ``#`` starts a comment.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Iterable, Mapping

from .kernel import (Engine, KernelError, Mechanism, ObjectSpec, SectionDef,
                     SectionKind, ServiceContext, BatchflowError)
from .mechanisms import MECHANISM_KINDS, HeaterTank
from .systems import SYSTEM_KINDS
from .thermal import (MODE_CORRECTED, THERMAL_MODES, ThermalParams,
                      check_stability)

IMPULSE = SectionKind.IMPULSE
FLOW = SectionKind.FLOW
LEVEL = SectionKind.LEVEL
SETTING = SectionKind.SETTING


class ConfigError(BatchflowError):
    """Malformed or inconsistent scenario configuration."""


class ImpulseMux(Mechanism):
    """Merge point for trigger impulses: any nonzero input means go.

    The output magnitude is the largest input seen this tick, so unit
    triggers stay unit triggers even when several arrive at once.
    """

    kind = "mMuxA"
    SECTIONS = (
        SectionDef("IN1", 1, IMPULSE),
        SectionDef("IN2", 2, IMPULSE),
        SectionDef("IN3", 3, IMPULSE),
        SectionDef("IN4", 4, IMPULSE),
        SectionDef("OUT", 5, IMPULSE, output=True),
    )

    def service(self, ctx: ServiceContext) -> None:
        top = max(ctx.inputs["IN1"], ctx.inputs["IN2"],
                  ctx.inputs["IN3"], ctx.inputs["IN4"])
        if top != 0.0:
            ctx.emit("OUT", top)


class DeliverySink(Mechanism):
    """Terminal consumer: accumulates whatever arrives on RT.

    The running total is republished on TOT every tick, which is what makes
    delivered quantity auditable from the trace.
    """

    kind = "mSnkA"
    SECTIONS = (
        SectionDef("RT", 1, FLOW),
        SectionDef("TOT", 2, LEVEL, output=True),
    )

    def __init__(self):
        self.total = 0.0

    def service(self, ctx: ServiceContext) -> None:
        self.total += ctx.inputs["RT"]
        ctx.emit("TOT", self.total)


SCENARIO_KINDS = {cls.kind: cls for cls in (ImpulseMux, DeliverySink)}

KIND_CLASSES: dict[str, type[Mechanism]] = {}
KIND_CLASSES.update(MECHANISM_KINDS)
KIND_CLASSES.update(SYSTEM_KINDS)
KIND_CLASSES.update(SCENARIO_KINDS)

THERMAL_KEYS = ("c_v", "c_w", "m_v", "eta", "s", "d_v", "dt")


@dataclass(frozen=True)
class RunSettings:
    max_ticks: int = 50_000
    trace: str | None = None
    thermal_mode: str = MODE_CORRECTED


@dataclass(frozen=True)
class ScenarioConfig:
    objects: tuple[ObjectSpec, ...] = ()
    connections: tuple[tuple[str, str], ...] = ()
    thermal: tuple[tuple[str, float], ...] = ()
    run: RunSettings = field(default_factory=RunSettings)
    service_order: tuple[str, ...] | None = None

    def thermal_params(self) -> ThermalParams:
        values = dict(self.thermal)
        return ThermalParams(mode=self.run.thermal_mode, **values)

    def object_map(self) -> dict[str, ObjectSpec]:
        return {spec.name: spec for spec in self.objects}


# -- parsing ---------------------------------------------------------------

def _fail(source: str, lineno: int, message: str) -> None:
    raise ConfigError(f"{source}:{lineno}: {message}")


def _parse_number(source: str, lineno: int, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        _fail(source, lineno, f"not a number: {raw!r}")


def parse_config(text: str, source: str = "<config>") -> ScenarioConfig:
    """Parse and statically validate a scenario config."""
    objects: list[ObjectSpec] = []
    index: dict[str, int] = {}
    overrides: dict[str, dict[str, float]] = {}
    connections: list[tuple[str, str]] = []
    thermal: dict[str, float] = {}
    run_kv: dict[str, str] = {}
    service_order: list[str] = []
    seen_sections: set[str] = set()

    section = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                _fail(source, lineno, f"malformed section header {line!r}")
            section = line[1:-1].strip()
            if section not in ("objects", "connections", "thermal", "run",
                               "service_order"):
                _fail(source, lineno, f"unknown section [{section}]")
            if section in seen_sections:
                _fail(source, lineno, f"duplicate section [{section}]")
            seen_sections.add(section)
            continue
        if section is None:
            _fail(source, lineno, f"content before any section: {line!r}")

        if section == "objects":
            if "=" not in line:
                _fail(source, lineno, f"expected 'name = kind' or "
                                      f"'name.SEC = value': {line!r}")
            key, _, value = (part.strip() for part in line.partition("="))
            if not value:
                _fail(source, lineno, f"missing value in {line!r}")
            if "." in key:
                obj_name, _, sec_name = key.partition(".")
                if obj_name not in index:
                    _fail(source, lineno, f"preset for undeclared object "
                                          f"{obj_name!r}")
                overrides[obj_name][sec_name] = _parse_number(source, lineno,
                                                             value)
            else:
                if value not in KIND_CLASSES:
                    _fail(source, lineno, f"unknown mechanism kind {value!r}")
                if key in index:
                    _fail(source, lineno, f"duplicate object name {key!r}")
                index[key] = len(objects)
                overrides[key] = {}
                objects.append(ObjectSpec(key, value))
        elif section == "connections":
            if "->" not in line:
                _fail(source, lineno, f"expected 'A.SEC -> B.SEC': {line!r}")
            src, _, tgt = (part.strip() for part in line.partition("->"))
            if src.count(".") != 1 or tgt.count(".") != 1:
                _fail(source, lineno, f"bad endpoint in {line!r}")
            connections.append((src, tgt))
        elif section == "thermal":
            key, _, value = (part.strip() for part in line.partition("="))
            if key not in THERMAL_KEYS:
                _fail(source, lineno, f"unknown thermal key {key!r}")
            thermal[key] = _parse_number(source, lineno, value)
        elif section == "run":
            key, _, value = (part.strip() for part in line.partition("="))
            if key not in ("max_ticks", "trace", "thermal_mode"):
                _fail(source, lineno, f"unknown run key {key!r}")
            run_kv[key] = value
        else:  # service_order
            service_order.append(line)

    if "objects" not in seen_sections:
        raise ConfigError(f"{source}: no [objects] section")

    specs = tuple(replace(spec, overrides=dict(overrides[spec.name]))
                  for spec in objects)

    max_ticks = 50_000
    if "max_ticks" in run_kv:
        try:
            max_ticks = int(run_kv["max_ticks"])
        except ValueError:
            raise ConfigError(f"{source}: max_ticks must be an integer, "
                              f"got {run_kv['max_ticks']!r}")
        if max_ticks < 1:
            raise ConfigError(f"{source}: max_ticks must be >= 1")
    mode = run_kv.get("thermal_mode", MODE_CORRECTED)
    if mode not in THERMAL_MODES:
        raise ConfigError(f"{source}: unknown thermal_mode {mode!r} "
                          f"(expected one of {', '.join(THERMAL_MODES)})")
    run = RunSettings(max_ticks=max_ticks, trace=run_kv.get("trace"),
                      thermal_mode=mode)

    config = ScenarioConfig(
        objects=specs,
        connections=tuple(connections),
        thermal=tuple(sorted(thermal.items())),
        run=run,
        service_order=tuple(service_order) if service_order else None,
    )
    _validate(config, source)
    return config


def load_config(path: str) -> ScenarioConfig:
    resolved = resolve_config_path(path)
    with open(resolved) as fh:
        return parse_config(fh.read(), source=os.path.basename(resolved))


def shipped_config_names() -> list[str]:
    root = resources.files("batchflow") / "configs"
    return sorted(entry.name for entry in root.iterdir()
                  if entry.name.endswith(".cfg"))


def resolve_config_path(path: str) -> str:
    """Use the file if it exists, else fall back to a shipped config name."""
    if os.path.exists(path):
        return path
    name = os.path.basename(path)
    packaged = resources.files("batchflow") / "configs" / name
    if packaged.is_file():
        return str(packaged)
    raise ConfigError(f"config not found: {path}")


def _section_def(spec: ObjectSpec, sec_name: str) -> SectionDef | None:
    for d in KIND_CLASSES[spec.kind].SECTIONS:
        if d.name == sec_name:
            return d
    return None


def _validate(config: ScenarioConfig, source: str) -> None:
    by_name = config.object_map()

    for spec in config.objects:
        for sec_name, value in spec.overrides.items():
            d = _section_def(spec, sec_name)
            if d is None:
                raise ConfigError(f"{source}: {spec.name} ({spec.kind}) has "
                                  f"no section {sec_name!r}")
            if d.kind in (IMPULSE, FLOW):
                raise ConfigError(f"{source}: {spec.name}.{sec_name} is "
                                  f"{d.kind.value}; only levels and settings "
                                  f"can be preset")

    incoming: dict[tuple[str, str], int] = {}
    for src, tgt in config.connections:
        ends = []
        for ref in (src, tgt):
            obj_name, _, sec_name = ref.partition(".")
            spec = by_name.get(obj_name)
            if spec is None:
                raise ConfigError(f"{source}: connection references unknown "
                                  f"object {obj_name!r}")
            d = _section_def(spec, sec_name)
            if d is None:
                raise ConfigError(f"{source}: {obj_name} ({spec.kind}) has "
                                  f"no section {sec_name!r}")
            ends.append((spec, d))
        (src_spec, src_def), (tgt_spec, tgt_def) = ends
        if not src_def.output:
            raise ConfigError(f"{source}: {src} is an input section and "
                              f"cannot source a connection")
        if tgt_def.output:
            raise ConfigError(f"{source}: {tgt} is an output section and "
                              f"cannot receive a connection")
        if tgt_def.kind is SETTING:
            raise ConfigError(f"{source}: {tgt} is a setting; settings "
                              f"accept no connections")
        if src_def.kind is not tgt_def.kind:
            raise ConfigError(f"{source}: kind mismatch {src} "
                              f"({src_def.kind.value}) -> {tgt} "
                              f"({tgt_def.kind.value})")
        key = (tgt_spec.name, tgt_def.name)
        incoming[key] = incoming.get(key, 0) + 1
        if (tgt_def.kind is IMPULSE and incoming[key] > 1
                and tgt_spec.kind != ImpulseMux.kind):
            raise ConfigError(
                f"{source}: {incoming[key]} writers into impulse input "
                f"{tgt} without a declared merge point; route them through "
                f"an {ImpulseMux.kind}")

    try:
        params = config.thermal_params()
        check_stability(params)
    except BatchflowError as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    if config.service_order is not None:
        known = set(by_name)
        labels = {f"{s}->{t}" for s, t in config.connections}
        for entry in config.service_order:
            normalized = entry.replace(" ", "")
            if "->" in normalized:
                if normalized not in labels:
                    raise ConfigError(f"{source}: service_order references "
                                      f"unknown connection {entry!r}")
            elif entry not in known:
                raise ConfigError(f"{source}: service_order references "
                                  f"unknown object {entry!r}")


# -- assembly --------------------------------------------------------------

def _topological_order(config: ScenarioConfig) -> list[str] | None:
    """Stable topological object order, or None when the wiring has cycles."""
    names = [spec.name for spec in config.objects]
    position = {name: i for i, name in enumerate(names)}
    succ: dict[str, set[str]] = {name: set() for name in names}
    indegree = {name: 0 for name in names}
    for src, tgt in config.connections:
        a = src.partition(".")[0]
        b = tgt.partition(".")[0]
        if a != b and b not in succ[a]:
            succ[a].add(b)
            indegree[b] += 1
    ready = sorted((n for n in names if indegree[n] == 0),
                   key=position.__getitem__)
    order: list[str] = []
    while ready:
        name = ready.pop(0)
        order.append(name)
        changed = False
        for nxt in succ[name]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                ready.append(nxt)
                changed = True
        if changed:
            ready.sort(key=position.__getitem__)
    return order if len(order) == len(names) else None


def build(config: ScenarioConfig,
          overrides: Mapping[str, float] | None = None,
          trace_enabled: bool = True) -> Engine:
    """Construct a ready-to-run engine from a parsed config.

    ``overrides`` maps ``"OBJ.SEC"`` references to replacement preset
    values, on top of whatever the config declares.
    """
    params = config.thermal_params()
    check_stability(params)

    factories = {}
    for kind, cls in KIND_CLASSES.items():
        if cls is HeaterTank:
            factories[kind] = lambda p=params: HeaterTank(p)
        else:
            factories[kind] = cls

    extra: dict[str, dict[str, float]] = {}
    if overrides:
        by_name = config.object_map()
        for ref, value in overrides.items():
            if ref.count(".") != 1:
                raise ConfigError(f"bad override reference {ref!r}, "
                                  f"want OBJ.SEC=value")
            obj_name, _, sec_name = ref.partition(".")
            spec = by_name.get(obj_name)
            if spec is None:
                raise ConfigError(f"override references unknown object "
                                  f"{obj_name!r}")
            d = _section_def(spec, sec_name)
            if d is None:
                raise ConfigError(f"override references unknown section "
                                  f"{ref!r}")
            if d.kind in (IMPULSE, FLOW):
                raise ConfigError(f"{ref} is {d.kind.value}; only levels "
                                  f"and settings can be overridden")
            extra.setdefault(obj_name, {})[sec_name] = float(value)

    engine = Engine(kinds=factories, trace_enabled=trace_enabled)

    object_order = _topological_order(config)
    if object_order is None:
        object_order = [spec.name for spec in config.objects]
        engine.notes.append("wiring is cyclic; objects serviced in "
                            "declaration order")
    by_name = config.object_map()
    for name in object_order:
        spec = by_name[name]
        merged = dict(spec.overrides)
        merged.update(extra.get(name, {}))
        try:
            engine.register_object(replace(spec, overrides=merged))
        except KernelError as exc:
            raise ConfigError(str(exc)) from exc

    for src, tgt in config.connections:
        try:
            engine.connect(src, tgt)
        except KernelError as exc:
            raise ConfigError(str(exc)) from exc

    if config.service_order is not None:
        entries = [e.replace(" ", "") if "->" in e else e
                   for e in config.service_order]
        try:
            engine.set_service_order(entries)
        except KernelError as exc:
            raise ConfigError(str(exc)) from exc

    return engine


# -- rendering (round-trip support) ----------------------------------------

def render_config(config: ScenarioConfig) -> str:
    """Emit config text that parses back to an equal ScenarioConfig."""
    out = ["[objects]"]
    for spec in config.objects:
        out.append(f"{spec.name} = {spec.kind}")
        for sec_name, value in spec.overrides.items():
            out.append(f"{spec.name}.{sec_name} = {value!r}")
    if config.connections:
        out.append("")
        out.append("[connections]")
        for src, tgt in config.connections:
            out.append(f"{src} -> {tgt}")
    if config.thermal:
        out.append("")
        out.append("[thermal]")
        for key, value in config.thermal:
            out.append(f"{key} = {value!r}")
    out.append("")
    out.append("[run]")
    out.append(f"max_ticks = {config.run.max_ticks}")
    if config.run.trace is not None:
        out.append(f"trace = {config.run.trace}")
    out.append(f"thermal_mode = {config.run.thermal_mode}")
    if config.service_order is not None:
        out.append("")
        out.append("[service_order]")
        out.extend(config.service_order)
    return "\n".join(out) + "\n"


# -- role discovery --------------------------------------------------------

@dataclass(frozen=True)
class ScenarioNames:
    """Unique instance names for the roles the reducers care about."""

    heater: str | None = None
    buffer: str | None = None
    source: str | None = None
    energy: str | None = None
    comparator: str | None = None
    sink: str | None = None
    demand: str | None = None


def discover_names(config: ScenarioConfig) -> ScenarioNames:
    roles = {"mTmprA": "heater", "sSepA": "buffer", "sSrcA": "source",
             "sSrcP": "energy", "mCmpA": "comparator", "mSnkA": "sink",
             "mGstA": "demand"}
    found: dict[str, str | None] = {}
    for spec in config.objects:
        role = roles.get(spec.kind)
        if role is None:
            continue
        # Ambiguous roles are dropped rather than guessed.
        found[role] = spec.name if role not in found else None
    return ScenarioNames(**found)
