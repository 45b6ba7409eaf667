"""batchflow: tick-driven simulation of port-connected process objects.

The package models a batch heating line (finite liquid store, heated
vessel, bounded buffer, periodic consumer) on a small dataflow kernel and
ships tooling to run, sweep, validate, and plot such scenarios.
"""

from .kernel import (BatchflowError, Engine, KernelError, NumericError,
                     ObjectSpec, SectionDef, SectionKind, TraceRecord,
                     render_trace, write_trace_csv)
from .report import RunSummary, read_trace_csv, summarize, write_summary_csv
from .scenario import (ConfigError, ScenarioConfig, build, discover_names,
                       load_config, parse_config, render_config,
                       resolve_config_path)
from .thermal import (MODE_CORRECTED, MODE_LEGACY, ThermalParams,
                      ThermalState, check_stability, mix_inflow,
                      thermal_step)

__version__ = "0.1.0"

__all__ = [
    "BatchflowError", "ConfigError", "Engine", "KernelError", "NumericError",
    "ObjectSpec", "RunSummary", "ScenarioConfig", "SectionDef", "SectionKind",
    "ThermalParams", "ThermalState", "TraceRecord", "MODE_CORRECTED",
    "MODE_LEGACY", "build", "check_stability", "discover_names",
    "load_config", "mix_inflow", "parse_config", "read_trace_csv",
    "render_config", "render_trace", "resolve_config_path", "summarize",
    "thermal_step", "write_summary_csv", "write_trace_csv", "__version__",
]
