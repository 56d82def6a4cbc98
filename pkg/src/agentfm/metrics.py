"""Metric agent: clean raw series (impute, optionally denoise), find
anomaly points, classify trends, and render a natural-language description."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Collection, Mapping, Optional, Union

import numpy as np

from .errors import AgentFMError, InvalidArgumentError, UnimputableSeriesError, ValidationError
from .llm import ChatRequest, Message
from .telemetry import MetricSeries, RawMetricSet, Window, format_seconds

Z_THRESHOLD = 3.0
MEDIAN_WINDOW = 5
TREND_EPS = 1e-9
VOLATILE_CV = 0.5
TRENDS = ("rising", "falling", "flat", "volatile")


@dataclass(frozen=True)
class PreprocessedMetricSet:
    node_id: str
    series: tuple[MetricSeries, ...]
    provenance: Mapping[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "series", tuple(self.series))
        for s in self.series:
            if s.missing_count:
                raise ValidationError("missing values remain after preprocessing", field=s.name)

    def get(self, name: str) -> Optional[MetricSeries]:
        for s in self.series:
            if s.name == name:
                return s
        return None

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.series]


def impute(timestamps, values) -> np.ndarray:
    """Linear interpolation in time inside, nearest observed value at the edges."""
    ts = np.asarray(timestamps, dtype=float)
    vals = np.array([np.nan if v is None else v for v in values], dtype=float)
    observed = ~np.isnan(vals)
    if not observed.all():
        vals[~observed] = np.interp(ts[~observed], ts[observed], vals[observed])
    return vals


def moving_median(values, window: int = MEDIAN_WINDOW) -> np.ndarray:
    """Centered moving median; the window shrinks at the edges."""
    vals = np.asarray(values, dtype=float)
    half = window // 2
    n = len(vals)
    return np.array([np.median(vals[max(0, i - half) : min(n, i + half + 1)]) for i in range(n)])


def preprocess(metrics: RawMetricSet, denoise: Union[bool, Collection[str]] = ()) -> PreprocessedMetricSet:
    """Impute every series; moving-median only the series named in ``denoise``.

    Denoising is opt-in because fault spikes are the signal downstream.
    """
    out, prov = [], {}
    for s in metrics.series:
        if len(s) and s.missing_count == len(s):
            raise UnimputableSeriesError(s.name)
        vals = impute(s.timestamps, s.values) if len(s) else np.zeros(0)
        smooth = denoise is True or (not isinstance(denoise, bool) and s.name in denoise)
        if smooth and len(vals):
            vals = moving_median(vals)
        out.append(MetricSeries(s.name, s.timestamps, tuple(vals.tolist())))
        prov[s.name] = {"denoised": bool(smooth), "imputed_count": s.missing_count}
    return PreprocessedMetricSet(metrics.node_id, tuple(out), prov)


@dataclass(frozen=True)
class AnomalyPoint:
    series_name: str
    timestamp: float
    value: float
    z_score: float


def _observed(series: MetricSeries) -> np.ndarray:
    if series.missing_count:
        raise InvalidArgumentError(f"series {series.name!r} still has missing values")
    return np.asarray(series.values, dtype=float)


def detect_anomaly_points(series: MetricSeries, threshold: float = Z_THRESHOLD) -> list[AnomalyPoint]:
    """Points whose |z| against the window's mean and sample std is >= threshold."""
    vals = _observed(series)
    if len(vals) < 2:
        return []
    std = vals.std(ddof=1)
    if std == 0:
        return []
    z = (vals - vals.mean()) / std
    return [
        AnomalyPoint(series.name, series.timestamps[i], float(vals[i]), float(z[i]))
        for i in np.flatnonzero(np.abs(z) >= threshold)
    ]


def classify_trend(series: MetricSeries) -> str:
    vals = _observed(series)
    if len(vals) < 2:
        return "flat"
    mean = vals.mean()
    std = vals.std()
    cv = (std / abs(mean)) if mean != 0 else (np.inf if std > 0 else 0.0)
    if cv > VOLATILE_CV:
        return "volatile"
    span = vals.max() - vals.min()
    if span == 0:
        return "flat"
    ts = np.asarray(series.timestamps, dtype=float)
    x = (ts - ts[0]) / (ts[-1] - ts[0])
    y = (vals - vals.min()) / span
    slope = np.polyfit(x, y, 1)[0]
    if slope > TREND_EPS:
        return "rising"
    if slope < -TREND_EPS:
        return "falling"
    return "flat"


def series_slope(series: MetricSeries) -> float:
    """Least-squares slope in value units per second."""
    vals = _observed(series)
    if len(vals) < 2:
        return 0.0
    ts = np.asarray(series.timestamps, dtype=float)
    return float(np.polyfit(ts - ts[0], vals, 1)[0])


@dataclass(frozen=True)
class NlDescription:
    node_id: str
    window: Window
    text: str
    trends: Mapping[str, str]
    anomalies: tuple[AnomalyPoint, ...] = ()
    degraded: bool = False

    def __post_init__(self):
        if not self.text:
            raise ValidationError("must be non-empty", field="description.text")
        object.__setattr__(self, "anomalies", tuple(self.anomalies))

    def to_json(self) -> dict:
        return {
            "node": self.node_id,
            "window": [self.window.start, self.window.end],
            "text": self.text,
            "trends": dict(self.trends),
            "anomalies": [
                {"series": a.series_name, "ts": a.timestamp, "value": a.value, "z": a.z_score} for a in self.anomalies
            ],
            "degraded": self.degraded,
        }


def _fmt(x: float) -> str:
    return f"{x:.3g}"


def templated_description(metrics: PreprocessedMetricSet, window: Window, trends, anomalies) -> str:
    lines = [
        f"Node {metrics.node_id} metrics over window {window} "
        f"({format_seconds(window.length)} s, {len(metrics.series)} series):"
    ]
    for s in metrics.series:
        if not len(s):
            lines.append(f"- {s.name}: no samples")
            continue
        v = np.asarray(s.values)
        lines.append(
            f"- {s.name}: mean {_fmt(v.mean())}, min {_fmt(v.min())}, max {_fmt(v.max())}, "
            f"last {_fmt(v[-1])}; trend {trends[s.name]}"
        )
    if anomalies:
        pts = "; ".join(
            f"{a.series_name} at t={format_seconds(a.timestamp)} value {_fmt(a.value)} (z={a.z_score:.2f})"
            for a in anomalies
        )
        lines.append(f"Anomaly points (z-score ≥ 3): {pts}")
    else:
        lines.append("No anomaly points (all |z| < 3).")
    return "\n".join(lines)


REWRITE_SYSTEM_PROMPT = (
    "<<stage:describe-metrics>>\n"
    "Rewrite the metric summary below as a short operational description. "
    "Keep every series name, the time interval, the trends and every anomaly point."
)


def describe_metrics(metrics: PreprocessedMetricSet, window: Window, llm=None) -> NlDescription:
    """Deterministic description, optionally rewritten by the model.

    Trends and anomaly points are always computed here, never by the model.
    """
    trends = {s.name: classify_trend(s) for s in metrics.series}
    anomalies = [a for s in metrics.series for a in detect_anomaly_points(s)]
    text = templated_description(metrics, window, trends, anomalies)
    degraded = False
    if llm is not None:
        request = ChatRequest(REWRITE_SYSTEM_PROMPT, (Message("user", text),), max_tokens=400)
        try:
            rewritten = llm.chat(request).text or ""
        except AgentFMError:
            rewritten = ""
        if rewritten.strip() and all(name in rewritten for name in metrics.names):
            text = rewritten.strip()
        else:
            degraded = True
    return NlDescription(metrics.node_id, window, text, trends, tuple(anomalies), degraded)
