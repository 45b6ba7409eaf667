"""Tick-based simulation kernel with port-connected dataflow objects.

Every simulated entity is an object exposing named port sections.  A section
carries a single float and has one of four kinds:

* ``IMPULSE``  - one-shot event, read-and-clear, concurrent deliveries add
* ``FLOW``     - quantity per tick, read-and-clear, concurrent deliveries add
* ``LEVEL``    - persistent measurement, overwritten, republished every tick
* ``SETTING``  - persistent configuration, written before the run starts

Connections are serviced entities of their own: each one moves (or, for
levels, copies) the current value of a source output section into a target
input section.  The engine walks a single service list once per tick, so a
value produced early in the list is visible to consumers later in the same
tick, and anything aimed backwards arrives one tick later.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, NamedTuple

TRACE_DIGITS_ENV = "BATCHFLOW_TRACE_DIGITS"
DEFAULT_TRACE_DIGITS = 12

# Residues below this are snapped to zero so drained stocks compare clean.
QUANTITY_EPS = 1e-9


class BatchflowError(Exception):
    """Base class for everything this package raises on purpose."""


class KernelError(BatchflowError):
    """Invalid registration, wiring, or service-order manipulation."""


class NumericError(BatchflowError):
    """A state update produced a non-finite value; the run must abort."""


class SectionKind(Enum):
    IMPULSE = "impulse"
    FLOW = "flow"
    LEVEL = "level"
    SETTING = "setting"


# Kinds whose values are consumed when read or moved.
_PULSE_KINDS = (SectionKind.IMPULSE, SectionKind.FLOW)


@dataclass(frozen=True)
class SectionDef:
    """Declares one port section of a mechanism kind.

    ``default=None`` marks a section that must be supplied by configuration.
    """

    name: str
    address: int
    kind: SectionKind
    output: bool = False
    default: float | None = 0.0


class PortSection:
    __slots__ = ("owner", "name", "address", "kind", "output", "value")

    def __init__(self, owner: str, sdef: SectionDef, value: float):
        self.owner = owner
        self.name = sdef.name
        self.address = sdef.address
        self.kind = sdef.kind
        self.output = sdef.output
        self.value = value

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"<{self.owner}.{self.name} {self.kind.value} {self.value!r}>"


class TraceRecord(NamedTuple):
    tick: int
    obj: str
    section: str
    value: float


@dataclass(frozen=True)
class ObjectSpec:
    """Declarative object description: a name, a kind, and overrides."""

    name: str
    kind: str
    overrides: Mapping[str, float] = field(default_factory=dict)


class ServiceContext:
    """What a mechanism sees while being serviced.

    ``inputs`` holds the value of every input section by name; impulse and
    flow inputs have already been cleared when the mechanism runs.
    """

    __slots__ = ("_engine", "_obj", "tick", "inputs")

    def __init__(self, engine: "Engine", obj: "SimObject"):
        self._engine = engine
        self._obj = obj
        self.tick = 0
        self.inputs: dict[str, float] = {}

    def emit(self, section: str, value: float) -> None:
        """Write an output section of the serviced object."""
        sec = self._obj.out_map.get(section)
        if sec is None:
            raise KernelError(
                f"{self._obj.name} has no output section {section!r}")
        if sec.kind is SectionKind.LEVEL:
            sec.value = value
            self._engine._record(self._obj.name, section, value)
        elif value != 0.0:
            sec.value = value
            self._engine._record(self._obj.name, section, value)

    def event(self, label: str, value: float) -> None:
        """Append a non-port event row (overflow amounts and the like)."""
        self._engine._record(self._obj.name, label, value)

    def warn(self, label: str, value: float = 1.0) -> None:
        """Record a warning event in the trace instead of raising."""
        self._engine._record(self._obj.name, "WRN:" + label, value)

    def request_stop(self, reason: str) -> None:
        self._engine.request_stop(reason)


class Mechanism:
    """Behaviour attached to a registered object.

    Subclasses declare ``SECTIONS`` and implement :meth:`service`.  ``setup``
    runs once at registration with the initial level/setting values.
    """

    kind: str = "?"
    SECTIONS: tuple[SectionDef, ...] = ()

    def setup(self, settings: Mapping[str, float]) -> None:
        pass

    @classmethod
    def validate_settings(cls, settings: Mapping[str, float]) -> None:
        pass

    def service(self, ctx: ServiceContext) -> None:
        raise NotImplementedError


class SimObject:
    __slots__ = ("name", "mech", "sections", "in_sections", "out_map",
                 "pulse_outputs", "ctx")

    def __init__(self, name: str, mech: Mechanism,
                 sections: dict[str, PortSection]):
        self.name = name
        self.mech = mech
        self.sections = sections
        self.in_sections = [s for s in sections.values() if not s.output]
        self.out_map = {s.name: s for s in sections.values() if s.output}
        self.pulse_outputs = [s for s in self.out_map.values()
                              if s.kind in _PULSE_KINDS]
        self.ctx: ServiceContext | None = None


class Connection:
    __slots__ = ("cid", "src", "tgt", "clears_source", "label")

    def __init__(self, cid: int, src: PortSection, tgt: PortSection):
        self.cid = cid
        self.src = src
        self.tgt = tgt
        # Recomputed by the engine: only the last connection of a fan-out
        # group consumes a pulse-kind source section.
        self.clears_source = True
        self.label = f"{src.owner}.{src.name}->{tgt.owner}.{tgt.name}"


class TickReport(NamedTuple):
    tick: int
    records: int
    stop_requested: bool


class Engine:
    """Holds the object registry, the wiring, and the service loop."""

    def __init__(self, kinds: Mapping[str, Callable[[], Mechanism]] | None = None,
                 trace_enabled: bool = True):
        self._kinds = dict(kinds) if kinds else {}
        self.objects: dict[str, SimObject] = {}
        self.object_order: list[str] = []
        self.connections: list[Connection] = []
        self.service_order: list[tuple[str, object]] = []
        self.tick = 0
        self.trace: list[TraceRecord] = []
        self.trace_enabled = trace_enabled
        self.stop_requested = False
        self.stop_reason: str | None = None
        self.notes: list[str] = []
        self._dirty = True

    # -- registration and wiring ------------------------------------------

    def register_object(self, spec: ObjectSpec) -> str:
        factory = self._kinds.get(spec.kind)
        if factory is None:
            raise KernelError(f"unknown mechanism kind {spec.kind!r}")
        return self.add_object(spec.name, factory(), spec.overrides)

    def add_object(self, name: str, mech: Mechanism,
                   overrides: Mapping[str, float] | None = None) -> str:
        if name in self.objects:
            raise KernelError(f"duplicate object name {name!r}")
        if not name:
            raise KernelError("object name must be non-empty")
        overrides = dict(overrides or {})
        defs = {d.name: d for d in mech.SECTIONS}
        for key in overrides:
            d = defs.get(key)
            if d is None:
                raise KernelError(f"{name}: unknown section {key!r} in overrides")
            if d.kind in _PULSE_KINDS:
                raise KernelError(
                    f"{name}.{key}: impulse/flow sections start at 0 and "
                    f"cannot be preset")
        sections: dict[str, PortSection] = {}
        settings: dict[str, float] = {}
        for d in mech.SECTIONS:
            if d.name in sections:
                raise KernelError(f"{name}: duplicate section {d.name!r}")
            if d.kind in _PULSE_KINDS:
                value = 0.0
            else:
                if d.name in overrides:
                    value = float(overrides[d.name])
                elif d.default is not None:
                    value = float(d.default)
                else:
                    raise KernelError(
                        f"{name}: missing required setting {d.name!r}")
                settings[d.name] = value
            sections[d.name] = PortSection(name, d, value)
        mech.validate_settings(settings)
        mech.setup(settings)
        obj = SimObject(name, mech, sections)
        obj.ctx = ServiceContext(self, obj)
        self.objects[name] = obj
        self.object_order.append(name)
        self.service_order.append(("obj", obj))
        self._dirty = True
        return name

    def section(self, obj_name: str, sec_name: str) -> PortSection:
        obj = self.objects.get(obj_name)
        if obj is None:
            raise KernelError(f"unknown object {obj_name!r}")
        sec = obj.sections.get(sec_name)
        if sec is None:
            raise KernelError(f"{obj_name} has no section {sec_name!r}")
        return sec

    def connect(self, src: str, tgt: str) -> int:
        """Wire ``"A.SEC"`` to ``"B.SEC"``; returns the connection id."""
        src_sec = self._resolve_ref(src)
        tgt_sec = self._resolve_ref(tgt)
        if not src_sec.output:
            raise KernelError(f"{src}: connection source must be an output")
        if tgt_sec.output:
            raise KernelError(f"{tgt}: connection target must be an input")
        if tgt_sec.kind is SectionKind.SETTING:
            raise KernelError(f"{tgt}: settings accept no connections")
        if src_sec.kind is not tgt_sec.kind:
            raise KernelError(
                f"kind mismatch: {src} is {src_sec.kind.value}, "
                f"{tgt} is {tgt_sec.kind.value}")
        conn = Connection(len(self.connections), src_sec, tgt_sec)
        self.connections.append(conn)
        self._insert_connection(conn)
        self._dirty = True
        return conn.cid

    def _resolve_ref(self, ref: str) -> PortSection:
        if ref.count(".") != 1:
            raise KernelError(f"bad section reference {ref!r}, want OBJ.SEC")
        obj_name, sec_name = ref.split(".")
        return self.section(obj_name, sec_name)

    def _insert_connection(self, conn: Connection) -> None:
        # Default placement: immediately after the source object and after
        # any earlier connections sourced from the same object.
        pos = None
        for i, (tag, payload) in enumerate(self.service_order):
            if tag == "obj" and payload.name == conn.src.owner:
                pos = i + 1
            elif tag == "conn" and payload.src.owner == conn.src.owner:
                pos = i + 1
        if pos is None:  # pragma: no cover - connect() already validated
            raise KernelError(f"source object {conn.src.owner!r} not serviced")
        self.service_order.insert(pos, ("conn", conn))

    def set_service_order(self, entries: Iterable[str]) -> None:
        """Replace the service list; every object and connection exactly once.

        Entries are object names or ``A.SEC->B.SEC`` connection labels.
        """
        by_label = {c.label: c for c in self.connections}
        order: list[tuple[str, object]] = []
        seen: set[object] = set()
        for entry in entries:
            if "->" in entry:
                conn = by_label.get(entry)
                if conn is None:
                    raise KernelError(f"unknown connection {entry!r}")
                item: object = conn
                order.append(("conn", conn))
            else:
                obj = self.objects.get(entry)
                if obj is None:
                    raise KernelError(f"unknown object {entry!r}")
                item = obj
                order.append(("obj", obj))
            if item in seen:
                raise KernelError(f"duplicate service entry {entry!r}")
            seen.add(item)
        missing = (len(self.objects) + len(self.connections)) - len(order)
        if missing:
            raise KernelError(f"service order leaves {missing} entries unserviced")
        self.service_order = order
        self._dirty = True

    def _refresh_groups(self) -> None:
        # Within one tick every outgoing connection of a section sees the
        # same value; only the one serviced last clears it.
        last: dict[int, Connection] = {}
        for tag, payload in self.service_order:
            if tag == "conn" and payload.src.kind in _PULSE_KINDS:
                last[id(payload.src)] = payload
        for conn in self.connections:
            if conn.src.kind in _PULSE_KINDS:
                conn.clears_source = last[id(conn.src)] is conn
        self._dirty = False

    # -- the service loop --------------------------------------------------

    def _record(self, obj: str, section: str, value: float) -> None:
        if self.trace_enabled:
            self.trace.append(TraceRecord(self.tick, obj, section, value))

    def request_stop(self, reason: str) -> None:
        if not self.stop_requested:
            self.stop_requested = True
            self.stop_reason = reason

    def step(self) -> TickReport:
        """Service every entry once, append trace rows, advance the tick."""
        if self._dirty:
            self._refresh_groups()
        n_before = len(self.trace)
        serviced = 0
        for tag, payload in self.service_order:
            serviced += 1
            if tag == "obj":
                ctx = payload.ctx
                ctx.tick = self.tick
                inputs = ctx.inputs
                inputs.clear()
                for sec in payload.in_sections:
                    inputs[sec.name] = sec.value
                    if sec.kind in _PULSE_KINDS:
                        sec.value = 0.0
                for sec in payload.pulse_outputs:
                    sec.value = 0.0
                payload.mech.service(ctx)
            else:
                src = payload.src
                tgt = payload.tgt
                if src.kind is SectionKind.LEVEL:
                    tgt.value = src.value
                    self._record(tgt.owner, tgt.name, src.value)
                else:
                    v = src.value
                    if v != 0.0:
                        tgt.value += v
                        self._record(tgt.owner, tgt.name, v)
                    if payload.clears_source:
                        src.value = 0.0
        if serviced != len(self.service_order):  # pragma: no cover
            raise KernelError("service list changed mid-tick")
        self.tick += 1
        return TickReport(self.tick - 1, len(self.trace) - n_before,
                          self.stop_requested)

    def run(self, max_ticks: int) -> list[TraceRecord]:
        if max_ticks < 1:
            raise KernelError(f"max_ticks must be >= 1, got {max_ticks}")
        while self.tick < max_ticks and not self.stop_requested:
            self.step()
        if self.stop_reason is None:
            self.stop_reason = "max_ticks"
        return self.trace


# -- trace serialization ---------------------------------------------------

def trace_digits() -> int:
    raw = os.environ.get(TRACE_DIGITS_ENV)
    if raw is None:
        return DEFAULT_TRACE_DIGITS
    try:
        digits = int(raw)
    except ValueError:
        raise BatchflowError(f"{TRACE_DIGITS_ENV} must be an integer, got {raw!r}")
    if not 1 <= digits <= 17:
        raise BatchflowError(f"{TRACE_DIGITS_ENV} out of range 1..17: {digits}")
    return digits


def render_trace(records: Iterable[TraceRecord]) -> str:
    """Render trace rows as CSV text, header included."""
    digits = trace_digits()
    lines = ["tick,object,section,value"]
    for tick, obj, section, value in records:
        lines.append(f"{tick},{obj},{section},{value:.{digits}g}")
    return "\n".join(lines) + "\n"


def write_trace_csv(path: str, records: Iterable[TraceRecord]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(render_trace(records))


def snap(value: float) -> float:
    """Clamp tiny positive residues (and float dust below zero) to 0.0."""
    if -QUANTITY_EPS < value < QUANTITY_EPS:
        return 0.0
    return value


def ensure_finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise NumericError(f"{what} became non-finite ({value!r})")
    return value
