"""Fixed-function mechanisms: relays, detectors, pulse generators, heater.

Kind codes (``mPassA``, ``mFinA``, ...) are the vocabulary used by config
files and traces; the class names say what each one actually does.
"""

from __future__ import annotations

from typing import Mapping

from .kernel import (KernelError, Mechanism, SectionDef, SectionKind,
                     ServiceContext, snap)
from .thermal import ThermalParams, ThermalState, mix_inflow, thermal_step

IMPULSE = SectionKind.IMPULSE
FLOW = SectionKind.FLOW
LEVEL = SectionKind.LEVEL
SETTING = SectionKind.SETTING


def S(name, address, kind, output=False, default=0.0):
    return SectionDef(name, address, kind, output, default)


class PassGate(Mechanism):
    """Emits its configured magnitude whenever the trigger input fires."""

    kind = "mPassA"
    SECTIONS = (
        S("IN", 1, IMPULSE),
        S("NUM", 2, SETTING, default=1.0),
        S("OUT", 3, IMPULSE, output=True),
    )

    def service(self, ctx: ServiceContext) -> None:
        if ctx.inputs["IN"] != 0.0:
            ctx.emit("OUT", ctx.inputs["NUM"])


class DualPassGate(Mechanism):
    """Waits until both triggers have fired, then emits once and rearms.

    Each input sets a latch; the emission happens on the tick the second
    latch is set (both may arrive the same tick) and clears both.
    """

    kind = "mPassB"
    SECTIONS = (
        S("IN1", 1, IMPULSE),
        S("IN2", 2, IMPULSE),
        S("NUM", 3, SETTING, default=1.0),
        S("OUT", 4, IMPULSE, output=True),
    )

    def __init__(self):
        self.mem1 = False
        self.mem2 = False

    def service(self, ctx: ServiceContext) -> None:
        if ctx.inputs["IN1"] != 0.0:
            self.mem1 = True
        if ctx.inputs["IN2"] != 0.0:
            self.mem2 = True
        if self.mem1 and self.mem2:
            ctx.emit("OUT", ctx.inputs["NUM"])
            self.mem1 = False
            self.mem2 = False


class FlowEndDetector(Mechanism):
    """Fires a unit impulse on the first quiet tick after a nonzero run."""

    kind = "mFinA"
    SECTIONS = (
        S("IN", 1, FLOW),
        S("OUT", 2, IMPULSE, output=True),
    )

    def __init__(self):
        self.mem = False

    def service(self, ctx: ServiceContext) -> None:
        if ctx.inputs["IN"] != 0.0:
            self.mem = True
        elif self.mem:
            self.mem = False
            ctx.emit("OUT", 1.0)


class ThresholdComparator(Mechanism):
    """Fires once when the measured input reaches the reference.

    Armed while IN2 sits below IN1; the first tick IN2 >= IN1 (equality
    included) emits a unit impulse and disarms until IN2 drops below IN1
    again, so each upward crossing fires exactly once.
    """

    kind = "mCmpA"
    SECTIONS = (
        S("IN1", 1, LEVEL, default=50.0),
        S("IN2", 2, LEVEL),
        S("OUT", 3, IMPULSE, output=True),
    )

    def __init__(self):
        self.armed = True

    def service(self, ctx: ServiceContext) -> None:
        reference = ctx.inputs["IN1"]
        measured = ctx.inputs["IN2"]
        if self.armed and measured >= reference:
            self.armed = False
            ctx.emit("OUT", 1.0)
        elif measured < reference:
            self.armed = True


class StartPulse(Mechanism):
    """Unit impulse on the first serviced tick, silence afterwards."""

    kind = "mGstB"
    SECTIONS = (
        S("OUT", 1, IMPULSE, output=True),
    )

    def __init__(self):
        self.fired = False

    def service(self, ctx: ServiceContext) -> None:
        if not self.fired:
            self.fired = True
            ctx.emit("OUT", 1.0)


class DemandPulse(Mechanism):
    """Emits MAG at the end of every PER-tick interval.

    A run of N ticks sees exactly ``N // PER`` impulses; magnitude 0 is a
    legal way to mute the generator.
    """

    kind = "mGstA"
    SECTIONS = (
        S("PER", 1, SETTING, default=100.0),
        S("MAG", 2, SETTING, default=0.6),
        S("OUT", 3, IMPULSE, output=True),
    )

    @classmethod
    def validate_settings(cls, settings: Mapping[str, float]) -> None:
        per = settings.get("PER", 100.0)
        if per < 1 or per != int(per):
            raise KernelError(f"mGstA PER must be an integer >= 1, got {per!r}")

    def setup(self, settings: Mapping[str, float]) -> None:
        self.period = int(settings["PER"])

    def service(self, ctx: ServiceContext) -> None:
        if (ctx.tick + 1) % self.period == 0:
            ctx.emit("OUT", ctx.inputs["MAG"])


class HeaterTank(Mechanism):
    """Batch heating vessel: fill, heat, then drain once heating ends.

    Liquid arriving on RT blends in at ambient temperature.  Power arriving
    on RP drives the thermal update; the tick after an RP run goes quiet the
    vessel starts releasing min(INT, load) per tick on PT until empty.
    Temperature TMP and load CL are republished every tick.
    """

    kind = "mTmprA"
    SECTIONS = (
        S("INT", 1, SETTING, default=0.01),
        S("TE", 2, SETTING, default=20.0),
        S("RT", 3, FLOW),
        S("RP", 4, FLOW),
        S("PT", 5, FLOW, output=True),
        S("TMP", 6, LEVEL, output=True),
        S("CL", 7, LEVEL, output=True),
    )

    def __init__(self, params: ThermalParams | None = None):
        self._base_params = params
        self.params: ThermalParams | None = None
        self.state = ThermalState(T_c=20.0, m_w=0.0)
        self.energy_mem = False
        self.discharging = False

    @classmethod
    def validate_settings(cls, settings: Mapping[str, float]) -> None:
        if settings.get("INT", 0.01) <= 0:
            raise KernelError("mTmprA INT must be > 0")

    def setup(self, settings: Mapping[str, float]) -> None:
        base = self._base_params or ThermalParams()
        if base.T_E != settings["TE"]:
            base = ThermalParams(T_E=settings["TE"], c_v=base.c_v, c_w=base.c_w,
                                 m_v=base.m_v, eta=base.eta, s=base.s,
                                 d_v=base.d_v, dt=base.dt, mode=base.mode)
        self.params = base
        self.state = ThermalState(T_c=base.T_E, m_w=0.0)

    def service(self, ctx: ServiceContext) -> None:
        inflow = ctx.inputs["RT"]
        power_in = ctx.inputs["RP"]
        rate = ctx.inputs["INT"]

        if inflow != 0.0:
            if self.discharging:
                ctx.warn("BATCH_OVERLAP", inflow)
            self.state = mix_inflow(self.state, inflow, ctx.inputs["TE"])

        if self.state.m_w > 0.0:
            self.state = thermal_step(self.state, self.params,
                                      power_in / self.params.dt)

        # Quiet tick after a power run: the batch is done, start draining.
        if power_in != 0.0:
            self.energy_mem = True
        elif self.energy_mem:
            self.energy_mem = False
            self.discharging = True

        if self.discharging:
            load = self.state.m_w
            if load > 0.0:
                out = rate if rate < load else load
                load = snap(load - out)
                self.state = ThermalState(self.state.T_c, load)
                ctx.emit("PT", out)
            if load <= 0.0:
                self.discharging = False

        ctx.emit("TMP", self.state.T_c)
        ctx.emit("CL", self.state.m_w)


MECHANISM_KINDS = {
    cls.kind: cls
    for cls in (PassGate, DualPassGate, FlowEndDetector, ThresholdComparator,
                StartPulse, DemandPulse, HeaterTank)
}
