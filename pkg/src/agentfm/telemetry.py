"""Telemetry data model: metrics, logs, trace spans, windows, bundle files.

Every type here is a frozen dataclass validated on construction, so any
value that exists is valid. Bundle files are JSONL:

    {"kind":"header","node":"n1","window":[0.0,60.0]}
    {"kind":"metric","node":"n1","name":"cpu_usage","ts":[...],"vals":[...]}
    {"kind":"log","node":"n1","ts":12.5,"level":"INFO","msg":"..."}
    {"kind":"span","trace":"t1","span":"s1","parent":null,"node":"n1",
     "op":"write","start":12.5,"dur":0.03,"status":"ok"}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import InvalidArgumentError, ParseError, ValidationError

DEFAULT_WINDOW_LENGTH = 60.0
DEFAULT_WINDOW_STRIDE = 60.0

LOG_LEVELS = ("DEBUG", "INFO", "WARN", "ERROR")
SPAN_STATUSES = ("ok", "error")


def _finite(x, field_name):
    x = float(x)
    if not math.isfinite(x):
        raise ValidationError("must be finite", field=field_name)
    return x


@dataclass(frozen=True)
class Window:
    """Half-open time interval ``[start, end)`` in seconds."""

    start: float
    end: float

    def __post_init__(self):
        object.__setattr__(self, "start", _finite(self.start, "window.start"))
        object.__setattr__(self, "end", _finite(self.end, "window.end"))
        if not self.end > self.start:
            raise ValidationError("end must be greater than start", field="window")

    @property
    def length(self) -> float:
        return self.end - self.start

    def contains(self, t: float) -> bool:
        return self.start <= t < self.end

    def __str__(self):
        return f"[{format_seconds(self.start)}, {format_seconds(self.end)})"


def format_seconds(t: float) -> str:
    """Compact, stable text for a timestamp (``60`` not ``60.0``)."""
    if float(t).is_integer():
        return str(int(t))
    return repr(float(t))


def window_key(window: Window) -> str:
    """File-name-safe key for a window, used for reports and ground truth."""
    return format_seconds(window.start)


@dataclass(frozen=True)
class MetricSeries:
    name: str
    timestamps: tuple[float, ...]
    values: tuple[Optional[float], ...]

    def __post_init__(self):
        if not self.name:
            raise ValidationError("must be non-empty", field="metric.name")
        ts = tuple(_finite(t, f"{self.name}.timestamps") for t in self.timestamps)
        vals = tuple(None if v is None else float(v) for v in self.values)
        if len(ts) != len(vals):
            raise ValidationError(
                f"{len(ts)} timestamps but {len(vals)} values", field=f"{self.name}.values"
            )
        for a, b in zip(ts, ts[1:]):
            if not b > a:
                raise ValidationError("timestamps not increasing", field=f"{self.name}.timestamps")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.timestamps)

    @property
    def missing_count(self) -> int:
        return sum(v is None for v in self.values)


@dataclass(frozen=True)
class RawMetricSet:
    node_id: str
    series: tuple[MetricSeries, ...] = ()

    def __post_init__(self):
        series = tuple(self.series)
        names = [s.name for s in series]
        if len(set(names)) != len(names):
            raise ValidationError("series names must be unique", field="metrics.series")
        object.__setattr__(self, "series", series)

    def get(self, name: str) -> Optional[MetricSeries]:
        for s in self.series:
            if s.name == name:
                return s
        return None

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.series]


@dataclass(frozen=True)
class LogEntry:
    timestamp: float
    level: str
    message: str

    def __post_init__(self):
        object.__setattr__(self, "timestamp", _finite(self.timestamp, "log.ts"))
        if self.level not in LOG_LEVELS:
            raise ValidationError(f"unknown level {self.level!r}", field="log.level")
        if not self.message:
            raise ValidationError("must be non-empty", field="log.msg")


@dataclass(frozen=True)
class LogSequence:
    node_id: str
    entries: tuple[LogEntry, ...] = ()

    def __post_init__(self):
        entries = tuple(self.entries)
        for a, b in zip(entries, entries[1:]):
            if b.timestamp < a.timestamp:
                raise ValidationError("timestamps decreasing", field="log.ts")
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass(frozen=True)
class TraceSpan:
    trace_id: str
    span_id: str
    parent_span_id: Optional[str]
    node_id: str
    operation: str
    start: float
    duration: float
    status: str = "ok"

    def __post_init__(self):
        object.__setattr__(self, "start", _finite(self.start, "span.start"))
        object.__setattr__(self, "duration", _finite(self.duration, "span.dur"))
        if self.duration < 0:
            raise ValidationError("must be >= 0", field="span.dur")
        if self.status not in SPAN_STATUSES:
            raise ValidationError(f"unknown status {self.status!r}", field="span.status")

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class TelemetryBundle:
    """One node's metrics, logs and spans for one window.

    ``window`` is ``None`` only for the empty bundle read from an empty file.
    """

    node_id: str
    window: Optional[Window]
    metrics: RawMetricSet = field(default=None)
    logs: LogSequence = field(default=None)
    spans: tuple[TraceSpan, ...] = ()

    def __post_init__(self):
        if self.metrics is None:
            object.__setattr__(self, "metrics", RawMetricSet(self.node_id))
        if self.logs is None:
            object.__setattr__(self, "logs", LogSequence(self.node_id))
        spans = tuple(self.spans)
        object.__setattr__(self, "spans", spans)

        seen = set()
        for s in spans:
            key = (s.trace_id, s.span_id)
            if key in seen:
                raise ValidationError(
                    f"duplicate span id {s.span_id!r} in trace {s.trace_id!r}", field="span.span"
                )
            seen.add(key)

        if self.window is None:
            if self.metrics.series or self.logs.entries or spans:
                raise ValidationError("non-empty bundle needs a window", field="window")
            return
        w = self.window
        for s in self.metrics.series:
            if any(not w.contains(t) for t in s.timestamps):
                raise ValidationError("timestamp outside window", field=f"{s.name}.timestamps")
        if any(not w.contains(e.timestamp) for e in self.logs.entries):
            raise ValidationError("timestamp outside window", field="log.ts")
        if any(not w.contains(s.start) for s in spans):
            raise ValidationError("timestamp outside window", field="span.start")

    @classmethod
    def empty(cls) -> "TelemetryBundle":
        return cls(node_id="", window=None)

    @property
    def is_empty(self) -> bool:
        return self.window is None


def window_partition(start: float, end: float, length: float, stride: float) -> list[Window]:
    """Cover ``[start, end)`` with windows of ``length`` every ``stride`` seconds.

    The last window is truncated at ``end``.
    """
    if length <= 0 or stride <= 0:
        raise InvalidArgumentError("length and stride must be positive")
    if not end > start:
        raise InvalidArgumentError("end must be greater than start")
    windows = []
    i = 0
    while True:
        ws = start + i * stride
        if ws >= end:
            break
        windows.append(Window(ws, min(ws + length, end)))
        i += 1
    return windows


# -- serialization -----------------------------------------------------------


def bundle_records(bundle: TelemetryBundle) -> Iterable[dict]:
    if bundle.is_empty:
        return
    yield {"kind": "header", "node": bundle.node_id, "window": [bundle.window.start, bundle.window.end]}
    for s in bundle.metrics.series:
        yield {
            "kind": "metric",
            "node": bundle.node_id,
            "name": s.name,
            "ts": list(s.timestamps),
            "vals": list(s.values),
        }
    for e in bundle.logs.entries:
        yield {"kind": "log", "node": bundle.node_id, "ts": e.timestamp, "level": e.level, "msg": e.message}
    for sp in bundle.spans:
        yield span_to_record(sp)


def span_to_record(sp: TraceSpan) -> dict:
    return {
        "kind": "span",
        "trace": sp.trace_id,
        "span": sp.span_id,
        "parent": sp.parent_span_id,
        "node": sp.node_id,
        "op": sp.operation,
        "start": sp.start,
        "dur": sp.duration,
        "status": sp.status,
    }


def dumps_bundle(bundle: TelemetryBundle) -> str:
    return "".join(json.dumps(rec, allow_nan=False) + "\n" for rec in bundle_records(bundle))


def save_bundle(bundle: TelemetryBundle, path) -> None:
    Path(path).write_text(dumps_bundle(bundle), encoding="utf-8")


def _require(rec, key, lineno):
    try:
        return rec[key]
    except KeyError:
        raise ParseError(f"missing field {key!r}", line=lineno) from None


def loads_bundle(text: str) -> TelemetryBundle:
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip()]
    if not lines:
        return TelemetryBundle.empty()

    records = []
    for lineno, ln in lines:
        try:
            rec = json.loads(ln)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", line=lineno) from None
        if not isinstance(rec, dict) or "kind" not in rec:
            raise ParseError("record must be an object with a 'kind'", line=lineno)
        records.append((lineno, rec))

    lineno, header = records[0]
    if header["kind"] != "header":
        raise ParseError("first record must be the header", line=lineno)
    node = _require(header, "node", lineno)
    win = _require(header, "window", lineno)
    if not isinstance(win, list) or len(win) != 2:
        raise ParseError("window must be [start, end]", line=lineno)

    series, entries, spans = [], [], []
    try:
        window = Window(win[0], win[1])
        for lineno, rec in records[1:]:
            kind = rec["kind"]
            if kind == "metric":
                if _require(rec, "node", lineno) != node:
                    raise ValidationError("node does not match header", field="metric.node")
                series.append(
                    MetricSeries(_require(rec, "name", lineno), _require(rec, "ts", lineno), _require(rec, "vals", lineno))
                )
            elif kind == "log":
                if _require(rec, "node", lineno) != node:
                    raise ValidationError("node does not match header", field="log.node")
                entries.append(LogEntry(_require(rec, "ts", lineno), _require(rec, "level", lineno), _require(rec, "msg", lineno)))
            elif kind == "span":
                spans.append(
                    TraceSpan(
                        trace_id=_require(rec, "trace", lineno),
                        span_id=_require(rec, "span", lineno),
                        parent_span_id=rec.get("parent"),
                        node_id=_require(rec, "node", lineno),
                        operation=_require(rec, "op", lineno),
                        start=_require(rec, "start", lineno),
                        duration=_require(rec, "dur", lineno),
                        status=rec.get("status", "ok"),
                    )
                )
            else:
                raise ParseError(f"unknown kind {kind!r}", line=lineno)
        return TelemetryBundle(
            node_id=node,
            window=window,
            metrics=RawMetricSet(node, series),
            logs=LogSequence(node, entries),
            spans=spans,
        )
    except ParseError:
        raise
    except ValidationError as exc:
        located = ValidationError(f"line {lineno}: {exc}")
        located.field = exc.field
        raise located from exc
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad value ({exc})", line=lineno) from exc


def load_bundle(path) -> TelemetryBundle:
    return loads_bundle(Path(path).read_text(encoding="utf-8"))


def all_spans(bundles: Sequence[TelemetryBundle]) -> list[TraceSpan]:
    return [sp for b in bundles for sp in b.spans]
