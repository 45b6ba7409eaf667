"""Lumped heating model for a stirred vessel with ambient loss.

One update per tick, explicit Euler.  Two variants are supported:

* ``legacy`` keeps the uncorrected historical form of the update, ambient
  temperature inside the gain numerator and a loss term normalised by the
  vessel capacity alone.  Kept so old runs stay reproducible.
* ``corrected`` (the default) is the dimensionally consistent form: gain is
  pure power over total heat capacity, and the conduction loss is divided by
  the same total capacity.

Both share the state update ``T <- T + dT_gain - dT_loss`` and skip the
update entirely while the vessel holds no liquid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .kernel import BatchflowError, NumericError

MODE_LEGACY = "legacy"
MODE_CORRECTED = "corrected"
THERMAL_MODES = (MODE_LEGACY, MODE_CORRECTED)


class ThermalConfigError(BatchflowError):
    """Rejected thermal parameter set."""


@dataclass(frozen=True)
class ThermalParams:
    """Vessel and liquid constants; ``dt`` is the tick duration."""

    T_E: float = 20.0     # ambient temperature
    c_v: float = 100.0    # vessel specific heat
    c_w: float = 800.0    # liquid specific heat
    m_v: float = 2.0      # vessel mass
    eta: float = 0.02     # ambient conduction coefficient
    s: float = 0.5        # effective wall area
    d_v: float = 0.05     # wall thickness
    dt: float = 1.0
    mode: str = MODE_CORRECTED

    def __post_init__(self):
        for name in ("c_v", "c_w", "m_v", "eta", "s", "d_v", "dt"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise ThermalConfigError(f"thermal parameter {name} must be > 0, got {v!r}")
        if not math.isfinite(self.T_E):
            raise ThermalConfigError(f"ambient temperature not finite: {self.T_E!r}")
        if self.mode not in THERMAL_MODES:
            raise ThermalConfigError(f"unknown thermal mode {self.mode!r}")

    def loss_coefficient(self, m_w: float) -> float:
        """Fraction of the excess temperature removed in one tick."""
        if self.mode == MODE_LEGACY:
            denom = self.c_v * self.m_v * self.d_v
            return self.eta * self.s * self.dt / denom
        denom = (self.c_v * self.m_v + self.c_w * m_w) * self.d_v
        return self.eta * self.s * self.dt / denom


def check_stability(params: ThermalParams) -> None:
    """Reject parameter sets whose explicit update can oscillate or diverge.

    The loss term is largest when the vessel is empty, so the guard is
    evaluated at zero liquid mass.
    """
    worst = params.loss_coefficient(0.0)
    if worst >= 1.0:
        raise ThermalConfigError(
            f"unstable thermal parameters: per-tick loss coefficient "
            f"{worst:.6g} >= 1; reduce eta*s*dt or increase d_v*c_v*m_v")


@dataclass(frozen=True)
class ThermalState:
    T_c: float   # current liquid temperature
    m_w: float   # liquid mass in the vessel


def thermal_step(state: ThermalState, params: ThermalParams,
                 power: float) -> ThermalState:
    """Advance the temperature one tick under heating power ``power``.

    The liquid mass is left untouched; an empty vessel returns unchanged.
    """
    if state.m_w <= 0.0:
        return state
    capacity = params.c_v * params.m_v + params.c_w * state.m_w
    excess = state.T_c - params.T_E
    if params.mode == MODE_LEGACY:
        d_gain = (power * params.dt + params.T_E) / capacity
        d_loss = (params.eta * params.s * excess * params.dt
                  / (params.c_v * params.m_v * params.d_v))
    else:
        d_gain = power * params.dt / capacity
        d_loss = (params.eta * params.s * excess / params.d_v) * params.dt / capacity
    t_new = state.T_c + d_gain - d_loss
    if not math.isfinite(t_new):
        raise NumericError(
            f"temperature update produced {t_new!r} "
            f"(T={state.T_c!r}, m_w={state.m_w!r}, P={power!r})")
    return replace(state, T_c=t_new)


def mix_inflow(state: ThermalState, inflow: float, temp_in: float) -> ThermalState:
    """Blend ``inflow`` mass entering at ``temp_in`` into the vessel.

    Mass-weighted average over the liquid only; an empty vessel simply takes
    the inflow temperature.
    """
    if inflow <= 0.0:
        return state
    if state.m_w <= 0.0 or state.T_c == temp_in:
        return ThermalState(T_c=temp_in if state.m_w <= 0.0 else state.T_c,
                            m_w=state.m_w + inflow)
    total = state.m_w + inflow
    t_new = (state.m_w * state.T_c + inflow * temp_in) / total
    if not math.isfinite(t_new):
        raise NumericError(f"inflow mixing produced {t_new!r}")
    return ThermalState(T_c=t_new, m_w=total)
