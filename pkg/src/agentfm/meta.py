"""Meta-agent: gathers standalone-agent outputs per node, stitches them
together along request traces, adds a role-weighted suspicion hint, and
drives detection -> diagnosis -> mitigation to a failure report."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from . import tasks
from .errors import AgentFMError, AlignmentError, StateError, SummarizationError
from .labels import UNKNOWN
from .logs import LogParser, OperationalSummary, RunSequence, compress_sequence, summarize_operations
from .metrics import NlDescription, describe_metrics, preprocess, series_slope
from .roles import NodeRole, RoleTable
from .tasks import Diagnosis, MitigationPlan, Verdict
from .telemetry import TelemetryBundle, TraceSpan, Window, window_key

log = logging.getLogger(__name__)

SUSPICION_THRESHOLD = 0.25
NARRATIVE_TRACES = 5
SUMMARY_BUDGET = 5


@dataclass(frozen=True)
class NodeDigest:
    node_id: str
    role: NodeRole
    window: Window
    nl_metrics: NlDescription
    log_runs: RunSequence
    log_summary: OperationalSummary
    node_flags: Mapping[str, bool]
    metric_stats: Mapping[str, dict] = field(default_factory=dict)
    level_counts: Mapping[str, int] = field(default_factory=dict)
    template_counts: Mapping[str, int] = field(default_factory=dict)
    span_stats: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.nl_metrics.window != self.window:
            raise AlignmentError(f"node {self.node_id}: metric description covers a different window")

    @property
    def flagged(self) -> bool:
        return bool(self.node_flags.get("metric_anomaly") or self.node_flags.get("error_logs"))

    def text(self) -> str:
        r = self.role
        head = f"[{self.node_id}] {r.kind}, {r.leadership}, importance {r.importance:.2f}"
        flags = ", ".join(k for k, v in self.node_flags.items() if v) or "none"
        lines = [head, self.nl_metrics.text]
        lines.append(
            f"Logs: {self.log_runs.total} entries in {len(self.log_runs)} runs; "
            f"levels {', '.join(f'{k}={v}' for k, v in sorted(self.level_counts.items())) or 'none'}"
        )
        lines.extend(f"  * {e}" for e in self.log_summary.elements)
        lines.append(f"Node flags: {flags}")
        return "\n".join(lines)


@dataclass(frozen=True)
class TraceLink:
    trace_id: str
    path: tuple[str, ...]
    duration: float
    error: bool

    def to_json(self) -> dict:
        return {"trace": self.trace_id, "path": list(self.path), "duration": self.duration, "error": self.error}


@dataclass(frozen=True)
class ClusterDigest:
    window: Window
    per_node: tuple[NodeDigest, ...]
    trace_links: tuple[TraceLink, ...]
    text: str
    span_stats: Mapping[str, float] = field(default_factory=dict)
    suspicion_score: Optional[float] = None
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.text:
            raise ValueError("cluster digest text must be non-empty")
        members = {d.node_id for d in self.per_node}
        for link in self.trace_links:
            stray = set(link.path) - members
            if stray:
                raise AlignmentError(f"trace {link.trace_id} touches unknown nodes {sorted(stray)}")

    @property
    def nodes(self) -> list[str]:
        return [d.node_id for d in self.per_node]


@dataclass(frozen=True)
class FailureReport:
    window: Window
    verdict: Verdict
    role_table_epoch: int
    diagnosis: Optional[Diagnosis] = None
    mitigation: Optional[MitigationPlan] = None
    error: Optional[Mapping[str, str]] = None
    suspicion_score: Optional[float] = None

    def __post_init__(self):
        if self.diagnosis is not None and not self.verdict.anomalous:
            raise ValueError("report has a diagnosis for a normal window")
        if self.mitigation is not None and self.diagnosis is None:
            raise ValueError("report has a mitigation without a diagnosis")

    def to_json(self) -> dict:
        return {
            "window": [self.window.start, self.window.end],
            "role_table_epoch": self.role_table_epoch,
            "suspicion_score": self.suspicion_score,
            "verdict": self.verdict.to_json(),
            "diagnosis": self.diagnosis.to_json() if self.diagnosis else None,
            "mitigation": self.mitigation.to_json() if self.mitigation else None,
            "error": dict(self.error) if self.error else None,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


# -- collection ---------------------------------------------------------------


def _span_stats(spans: Sequence[TraceSpan]) -> dict:
    if not spans:
        return {"count": 0, "errors": 0, "p95": 0.0}
    durs = np.array([s.duration for s in spans])
    return {
        "count": len(spans),
        "errors": sum(s.status == "error" for s in spans),
        "p95": float(np.percentile(durs, 95)),
    }


def _metric_stats(pre) -> dict:
    out = {}
    for s in pre.series:
        v = np.asarray(s.values, dtype=float)
        if not len(v):
            continue
        sd1 = v.std(ddof=1) if len(v) > 1 else 0.0
        out[s.name] = {
            "mean": float(v.mean()),
            "std": float(v.std()),
            "max_abs_z": float(np.abs((v - v.mean()) / sd1).max()) if sd1 > 0 else 0.0,
            "slope": series_slope(s),
        }
    return out


def digest_node(bundle: TelemetryBundle, role: NodeRole, llm=None, *, rewrite_metrics: bool = False, summary_budget: int = SUMMARY_BUDGET) -> NodeDigest:
    window = bundle.window
    pre = preprocess(bundle.metrics)
    desc = describe_metrics(pre, window, llm if rewrite_metrics else None)

    parser = LogParser()
    ids = [parser.parse(e)[0] for e in bundle.logs]
    runs = compress_sequence(ids)
    templates = parser.templates
    try:
        summary = summarize_operations(runs, templates, llm, summary_budget)
    except SummarizationError as exc:
        log.warning("node %s: %s; using deterministic summary", bundle.node_id, exc)
        summary = summarize_operations(runs, templates, None, summary_budget)
        summary = OperationalSummary(summary.elements, summary.source_count, degraded=True)

    levels = Counter(e.level for e in bundle.logs)
    patterns = Counter(templates[t].pattern for t in ids)
    flags = {
        "metric_anomaly": bool(desc.anomalies),
        "error_logs": levels.get("ERROR", 0) > 0,
    }
    return NodeDigest(
        node_id=bundle.node_id,
        role=role,
        window=window,
        nl_metrics=desc,
        log_runs=runs,
        log_summary=summary,
        node_flags=flags,
        metric_stats=_metric_stats(pre),
        level_counts=dict(sorted(levels.items())),
        template_counts=dict(patterns),
        span_stats=_span_stats(bundle.spans),
    )


def collect(bundles: Sequence[TelemetryBundle], table: RoleTable, llm=None, **kwargs) -> list[NodeDigest]:
    """Run the metric and log agents for every node's bundle."""
    live = [b for b in bundles if not b.is_empty]
    windows = {b.window for b in live}
    if len(windows) > 1:
        raise AlignmentError(f"bundles cover {len(windows)} different windows")
    out = []
    for b in live:
        if b.node_id not in table:
            raise StateError(f"no role for node {b.node_id!r}")
        out.append(digest_node(b, table[b.node_id], llm, **kwargs))
    return out


# -- trace integration ----------------------------------------------------------


def build_trace_links(spans: Sequence[TraceSpan], members) -> tuple[list[TraceLink], list[str]]:
    warnings = []
    by_trace: dict[str, list[TraceSpan]] = {}
    for sp in spans:
        if sp.node_id not in members:
            warnings.append(f"dropped span {sp.trace_id}/{sp.span_id} from unknown node {sp.node_id}")
            continue
        by_trace.setdefault(sp.trace_id, []).append(sp)
    links = []
    for tid, group in by_trace.items():
        group.sort(key=lambda s: (s.start, s.span_id))
        path: list[str] = []
        for s in group:
            if s.node_id not in path:
                path.append(s.node_id)
        start = min(s.start for s in group)
        end = max(s.end for s in group)
        links.append(TraceLink(tid, tuple(path), end - start, any(s.status == "error" for s in group)))
    links.sort(key=lambda l: (-l.duration, l.trace_id))
    return links, warnings


def aggregate_node_flags(digests: Sequence[NodeDigest], table: RoleTable) -> tuple[bool, float]:
    """Importance-weighted fraction of flagged nodes, and whether it crosses the hint threshold."""
    total = sum(table.importance(d.node_id) for d in digests)
    if total == 0:
        return False, 0.0
    score = sum(table.importance(d.node_id) for d in digests if d.flagged) / total
    return score >= SUSPICION_THRESHOLD, score


def _narrative(window, digests, links, span_stats, hint: Optional[str]) -> str:
    errors = sum(l.error for l in links)
    lines = [
        f"Cluster digest for window {window}: {len(digests)} nodes, {len(links)} traces "
        f"({errors} with errors), p95 span duration {span_stats['p95']:.3g} s."
    ]
    if hint:
        lines.append(hint)
    by_id = {d.node_id: d for d in digests}
    described: set[str] = set()
    top = links[:NARRATIVE_TRACES]
    if top:
        lines.append("## Slowest traces")
    for link in top:
        status = "error" if link.error else "ok"
        lines.append(f"Trace {link.trace_id} ({link.duration:.3g} s, {status}): {' -> '.join(link.path)}")
        for nid in link.path:
            if nid not in described:
                described.add(nid)
                lines.append(by_id[nid].text())
    rest = [d for d in digests if d.node_id not in described]
    if rest:
        lines.append("## Nodes" if not top else "## Other nodes")
        lines.extend(d.text() for d in rest)
    return "\n".join(lines)


def suspicion_hint(suspicion: bool, score: float) -> str:
    state = "suspicious" if suspicion else "not suspicious"
    return f"Role-weighted suspicion hint: score {score:.3f} (threshold {SUSPICION_THRESHOLD}) -> {state}."


def integrate_with_traces(digests: Sequence[NodeDigest], spans: Sequence[TraceSpan], table: Optional[RoleTable] = None) -> ClusterDigest:
    """Cross-node digest organized around the slowest traces.

    With a role table the role-weighted hint is attached to the text.
    """
    windows = {d.window for d in digests}
    if len(windows) > 1:
        raise AlignmentError("node digests cover different windows")
    if not digests:
        raise AlignmentError("no node digests to integrate")
    (window,) = windows
    members = {d.node_id for d in digests}
    links, warnings = build_trace_links(spans, members)
    for w in warnings:
        log.warning(w)
    kept = [s for s in spans if s.node_id in members]
    stats = _span_stats(kept)
    score = hint = None
    if table is not None:
        suspicion, score = aggregate_node_flags(digests, table)
        hint = suspicion_hint(suspicion, score)
    text = _narrative(window, digests, links, stats, hint)
    return ClusterDigest(window, tuple(digests), tuple(links), text, stats, score, tuple(warnings))


def build_cluster_digest(bundles: Sequence[TelemetryBundle], table: RoleTable, llm=None, **kwargs) -> ClusterDigest:
    digests = collect(bundles, table, llm, **kwargs)
    spans = [s for b in bundles for s in b.spans]
    return integrate_with_traces(digests, spans, table)


# -- task pipeline --------------------------------------------------------------


def run_pipeline(cluster: ClusterDigest, table: RoleTable, store, llm, **kwargs) -> FailureReport:
    """Detection always; diagnosis iff anomalous; mitigation iff the label is known.

    A failing stage ends the run with the stages completed so far plus an
    error record.
    """
    base = dict(window=cluster.window, role_table_epoch=table.epoch, suspicion_score=cluster.suspicion_score)
    try:
        verdict = tasks.detect(cluster, store, llm, **kwargs)
    except AgentFMError as exc:
        anomalous, why = tasks.fallback_anomalous(cluster)
        verdict = Verdict(cluster.window, anomalous, why, degraded=True)
        return FailureReport(verdict=verdict, error=_error("detection", exc), **base)
    if not verdict.anomalous:
        return FailureReport(verdict=verdict, **base)

    try:
        diagnosis = tasks.diagnose(cluster, verdict, store, llm, **kwargs)
    except AgentFMError as exc:
        return FailureReport(verdict=verdict, error=_error("diagnosis", exc), **base)
    if diagnosis.label == UNKNOWN:
        return FailureReport(verdict=verdict, diagnosis=diagnosis, **base)

    try:
        plan = tasks.mitigate(diagnosis, llm, digest=cluster)
    except AgentFMError as exc:
        return FailureReport(verdict=verdict, diagnosis=diagnosis, error=_error("mitigation", exc), **base)
    return FailureReport(verdict=verdict, diagnosis=diagnosis, mitigation=plan, **base)


def _error(stage: str, exc: AgentFMError) -> dict:
    return {"stage": stage, "kind": exc.kind, "message": str(exc)}


def write_report(report: FailureReport, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{window_key(report.window)}.json"
    path.write_text(report.dumps(), encoding="utf-8")
    return path


def load_report_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
