"""Role-aware multi-agent failure management for distributed databases."""

from .errors import AgentFMError
from .telemetry import LogEntry, LogSequence, MetricSeries, RawMetricSet, TelemetryBundle, TraceSpan, Window

__version__ = "0.1.0"

__all__ = [
    "AgentFMError",
    "LogEntry",
    "LogSequence",
    "MetricSeries",
    "RawMetricSet",
    "TelemetryBundle",
    "TraceSpan",
    "Window",
    "__version__",
]
