"""Stock-bearing systems: buffer store, finite liquid source, energy source.

These hold real quantities between ticks, so their arithmetic is written to
conserve mass: everything released is subtracted from a stock and everything
accepted is added to one, with overflow explicitly logged.
"""

from __future__ import annotations

from typing import Mapping

from .kernel import (KernelError, Mechanism, SectionDef, SectionKind,
                     ServiceContext, snap)

IMPULSE = SectionKind.IMPULSE
FLOW = SectionKind.FLOW
LEVEL = SectionKind.LEVEL
SETTING = SectionKind.SETTING


def S(name, address, kind, output=False, default=0.0):
    return SectionDef(name, address, kind, output, default)


class BufferStore(Mechanism):
    """Bounded product buffer between producer and consumer.

    Inflow on RT is accepted up to HL; the clipped excess is logged as an
    OVF event and discarded from the process (but still accounted).  Demand
    impulses on ZT queue up a release remainder which drains through PT at
    INT per tick while stock lasts.  Whenever the level reads below LL and
    no restock request is outstanding, a unit impulse leaves on UTP; the
    request stays outstanding until a nonzero RT run completes.
    """

    kind = "sSepA"
    SECTIONS = (
        S("SL", 1, SETTING, default=0.0),
        S("LL", 2, SETTING, default=1.2),
        S("HL", 3, SETTING, default=2.0),
        S("INT", 4, SETTING, default=0.01),
        S("CL", 5, LEVEL, output=True),
        S("RT", 6, FLOW),
        S("UTP", 7, IMPULSE, output=True),
        S("ZT", 8, IMPULSE),
        S("PT", 9, FLOW, output=True),
    )

    def __init__(self):
        self.stock = 0.0
        self.pending = 0.0      # demanded but not yet released
        self.requested = False  # restock request outstanding
        self.rt_mem = False
        self.overflow_total = 0.0

    @classmethod
    def validate_settings(cls, settings: Mapping[str, float]) -> None:
        if settings.get("INT", 0.01) <= 0:
            raise KernelError("sSepA INT must be > 0")
        if settings.get("HL", 2.0) < 0:
            raise KernelError("sSepA HL must be >= 0")

    def setup(self, settings: Mapping[str, float]) -> None:
        self.stock = settings["SL"]

    def service(self, ctx: ServiceContext) -> None:
        inflow = ctx.inputs["RT"]
        demand = ctx.inputs["ZT"]
        low = ctx.inputs["LL"]
        high = ctx.inputs["HL"]
        rate = ctx.inputs["INT"]

        if inflow != 0.0:
            self.rt_mem = True
            space = high - self.stock
            if inflow > space:
                taken = space if space > 0.0 else 0.0
                excess = inflow - taken
                self.overflow_total += excess
                ctx.event("OVF", excess)
                self.stock += taken
            else:
                self.stock += inflow
        elif self.rt_mem:
            # Restock run finished; the standing request is satisfied.
            self.rt_mem = False
            self.requested = False

        if demand != 0.0:
            if demand < 0.0:
                ctx.warn("ZT_NEGATIVE", demand)
            else:
                self.pending += demand

        release = min(rate, self.pending, self.stock)
        if release > 0.0:
            self.pending = snap(self.pending - release)
            self.stock = snap(self.stock - release)
            ctx.emit("PT", release)

        if self.stock < low and not self.requested:
            self.requested = True
            ctx.emit("UTP", 1.0)

        ctx.emit("CL", self.stock)


class StockSource(Mechanism):
    """Finite raw-liquid store releasing assigned portions at a fixed rate.

    Each ZT impulse adds its magnitude to the outstanding assignment, which
    drains through PT at INT per tick while stock remains.  With STP set, an
    assignment that finds the stock exhausted halts the run: the store has
    delivered everything it ever will.
    """

    kind = "sSrcA"
    SECTIONS = (
        S("SL", 1, SETTING, default=30.0),
        S("INT", 2, SETTING, default=0.01),
        S("STP", 3, SETTING, default=0.0),
        S("ZT", 4, IMPULSE),
        S("PT", 5, FLOW, output=True),
        S("CL", 6, LEVEL, output=True),
    )

    def __init__(self):
        self.stock = 0.0
        self.pending = 0.0

    @classmethod
    def validate_settings(cls, settings: Mapping[str, float]) -> None:
        if settings.get("INT", 0.01) <= 0:
            raise KernelError("sSrcA INT must be > 0")
        if settings.get("SL", 30.0) < 0:
            raise KernelError("sSrcA SL must be >= 0")

    def setup(self, settings: Mapping[str, float]) -> None:
        self.stock = settings["SL"]

    def service(self, ctx: ServiceContext) -> None:
        demand = ctx.inputs["ZT"]
        if demand != 0.0:
            if demand < 0.0:
                ctx.warn("ZT_NEGATIVE", demand)
            else:
                self.pending += demand

        release = min(ctx.inputs["INT"], self.pending, self.stock)
        if release > 0.0:
            self.pending = snap(self.pending - release)
            self.stock = snap(self.stock - release)
            ctx.emit("PT", release)

        if (ctx.inputs["STP"] != 0.0 and self.stock == 0.0
                and self.pending > 0.0):
            ctx.request_stop("stock_empty")

        ctx.emit("CL", self.stock)


class EnergySource(Mechanism):
    """Switchable constant-power feed.

    A ZP impulse of magnitude A starts a feed of A per tick on PP beginning
    that same tick; ZOF switches it off.  Non-positive ZP amplitudes are
    ignored, and a second ZP before any ZOF overwrites the first; both cases
    are logged in the trace.
    """

    kind = "sSrcP"
    SECTIONS = (
        S("ZP", 1, IMPULSE),
        S("ZOF", 2, IMPULSE),
        S("PP", 3, FLOW, output=True),
    )

    def __init__(self):
        self.intensity = 0.0
        self.delivered_total = 0.0

    def service(self, ctx: ServiceContext) -> None:
        if ctx.inputs["ZOF"] != 0.0:
            self.intensity = 0.0
        amplitude = ctx.inputs["ZP"]
        if amplitude != 0.0:
            if amplitude <= 0.0:
                ctx.warn("ZP_IGNORED", amplitude)
            else:
                if self.intensity != 0.0:
                    ctx.warn("ZP_OVERWRITE", amplitude)
                self.intensity = amplitude
        if self.intensity != 0.0:
            self.delivered_total += self.intensity
            ctx.emit("PP", self.intensity)


SYSTEM_KINDS = {cls.kind: cls for cls in (BufferStore, StockSource, EnergySource)}
