"""Round-synchronous simulator, scenario configs and trace-derived metrics."""

from .config import ConfigError, ScenarioBundle, ScenarioConfig, load_bundle, parse_bundle, parse_config
from .engine import Simulation, direct_broadcast_baseline, read_trace, run, trace_digest, write_trace
from .metrics import RunMetrics, TraceError, compute_metrics

__all__ = [
    "ConfigError",
    "RunMetrics",
    "ScenarioBundle",
    "ScenarioConfig",
    "Simulation",
    "TraceError",
    "compute_metrics",
    "direct_broadcast_baseline",
    "load_bundle",
    "parse_bundle",
    "parse_config",
    "read_trace",
    "run",
    "trace_digest",
    "write_trace",
]
