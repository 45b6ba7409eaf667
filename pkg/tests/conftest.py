"""Shared fixtures and scripted-input helpers for the suite.

The expensive shipped-scenario run is session scoped so the acceptance
tests can share one audit instead of re-running fifty thousand ticks per
test.
"""

import pytest

from batchflow.checks import run_audited
from batchflow.kernel import Engine, Mechanism, SectionDef, SectionKind
from batchflow.scenario import KIND_CLASSES, discover_names, load_config


# -- scripted feeders -------------------------------------------------------
#
# Each one plays back a fixed value sequence, one entry per tick, through a
# single output section.  They let unit tests drive a mechanism through real
# engine wiring instead of poking its service method directly.

class ImpulseScript(Mechanism):
    kind = "testImpulseScript"
    SECTIONS = (SectionDef("OUT", 1, SectionKind.IMPULSE, output=True),)

    def __init__(self, values):
        self.values = list(values)

    def service(self, ctx):
        if ctx.tick < len(self.values):
            ctx.emit("OUT", self.values[ctx.tick])


class FlowScript(Mechanism):
    kind = "testFlowScript"
    SECTIONS = (SectionDef("OUT", 1, SectionKind.FLOW, output=True),)

    def __init__(self, values):
        self.values = list(values)

    def service(self, ctx):
        if ctx.tick < len(self.values):
            ctx.emit("OUT", self.values[ctx.tick])


class LevelScript(Mechanism):
    kind = "testLevelScript"
    SECTIONS = (SectionDef("OUT", 1, SectionKind.LEVEL, output=True),)

    def __init__(self, values):
        self.values = list(values)

    def service(self, ctx):
        # Hold the last value once the script runs out.
        i = min(ctx.tick, len(self.values) - 1)
        ctx.emit("OUT", self.values[i])


def drive(kind: str, feeds: dict, ticks: int, overrides: dict | None = None):
    """Run one mechanism of ``kind`` with scripted inputs.

    ``feeds`` maps input section names to value sequences; the feeder kind
    is chosen from the section's declared kind.  Returns the engine, with
    the unit under test registered as ``"dut"``.
    """
    cls = KIND_CLASSES[kind]
    by_name = {d.name: d for d in cls.SECTIONS}
    engine = Engine()
    for sec_name, values in feeds.items():
        d = by_name[sec_name]
        feeder = {
            SectionKind.IMPULSE: ImpulseScript,
            SectionKind.FLOW: FlowScript,
            SectionKind.LEVEL: LevelScript,
        }[d.kind](values)
        engine.add_object(f"feed_{sec_name}", feeder)
    engine.add_object("dut", cls(), overrides or {})
    for sec_name in feeds:
        engine.connect(f"feed_{sec_name}.OUT", f"dut.{sec_name}")
    engine.run(ticks)
    return engine


def out_ticks(engine, section="OUT", obj="dut"):
    return [r.tick for r in engine.trace
            if r.obj == obj and r.section == section]


def out_series(engine, section="OUT", obj="dut"):
    return [(r.tick, r.value) for r in engine.trace
            if r.obj == obj and r.section == section]


# -- shared shipped-scenario runs ------------------------------------------

@pytest.fixture(scope="session")
def shipped_config():
    return load_config("heating.cfg")


@pytest.fixture(scope="session")
def shipped_names(shipped_config):
    return discover_names(shipped_config)


@pytest.fixture(scope="session")
def shipped_50k(shipped_config):
    """Full 50 000-tick audited run of the default scenario, trace kept."""
    return run_audited(shipped_config, ticks=50_000)
