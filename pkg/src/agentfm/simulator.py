"""Fault-injection simulator for a small role-tagged distributed database.

Baseline telemetry is generated per node and window from a seeded RNG;
faults are applied afterwards and touch only their target nodes (network
partitions also sever the replica spans that other nodes receive from the
isolated node). Signatures are chosen so that resource faults show up in
metrics while export/import faults show up in logs; that split is by
design, not an independent finding.
"""

from __future__ import annotations

import json
import math
import shutil
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, InvalidArgumentError
from .labels import FAULT_LABELS
from .roles import SystemState, NodeState
from .telemetry import (
    LogEntry,
    LogSequence,
    MetricSeries,
    RawMetricSet,
    TelemetryBundle,
    TraceSpan,
    Window,
    dumps_bundle,
    load_bundle,
    window_key,
)

METRIC_NAMES = ("cpu_usage", "memory_usage", "disk_io_util", "net_util", "write_rate")
METRIC_INTERVAL = 1.0
NOISE_SD = 0.015
MISSING_RATE = 0.01
DEFAULT_INTENSITY = 0.8
DEFAULT_WINDOW = 60.0

BASELINE_LEVELS = {
    "config": (0.15, 0.30, 0.05, 0.05, 0.02),
    "coordinator": (0.35, 0.45, 0.10, 0.30, 0.30),
    "storage": (0.30, 0.55, 0.25, 0.20, 0.40),
}

# events per second
LOG_RATES = {
    "config": {"heartbeat": 0.2, "partition_sync": 0.03},
    "coordinator": {"route": 0.5, "query_done": 0.5},
    "storage": {"write": 0.5, "flush": 0.1, "compaction": 0.03, "replicate": 0.2},
}
TRACE_RATE = 0.4


# -- cluster -------------------------------------------------------------------


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    kind: str
    leader_partitions: int = 0


@dataclass(frozen=True)
class ClusterSpec:
    nodes: tuple[NodeSpec, ...]
    total_partitions: int
    seed: int = 42

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if not self.nodes:
            raise InvalidArgumentError("a cluster needs at least one node")
        if sum(n.leader_partitions for n in self.nodes) > self.total_partitions:
            raise InvalidArgumentError("leader partitions exceed total_partitions")
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError("duplicate node ids")

    @property
    def ids(self) -> list[str]:
        return [n.node_id for n in self.nodes]

    def node(self, node_id) -> NodeSpec:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)

    def of_kind(self, kind) -> list[str]:
        return [n.node_id for n in self.nodes if n.kind == kind]

    def to_config(self) -> dict:
        return {
            "nodes": [{"id": n.node_id, "kind": n.kind, "leader_partitions": n.leader_partitions} for n in self.nodes],
            "total_partitions": self.total_partitions,
            "seed": self.seed,
        }

    @classmethod
    def from_config(cls, doc: Mapping, seed: Optional[int] = None) -> "ClusterSpec":
        try:
            nodes = tuple(NodeSpec(n["id"], n["kind"], int(n.get("leader_partitions", 0))) for n in doc["nodes"])
            return cls(nodes, int(doc["total_partitions"]), int(doc.get("seed", 42) if seed is None else seed))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad cluster config: {exc}") from exc


def default_cluster(n_nodes: int = 6, seed: int = 42) -> ClusterSpec:
    """n1 config, n2 coordinator, the rest storage; the last storage node
    leads half the partitions and the others share the remainder."""
    if n_nodes < 1:
        raise InvalidArgumentError("need at least one node")
    if n_nodes == 1:
        return ClusterSpec((NodeSpec("n1", "storage", 2),), 2, seed)
    if n_nodes == 2:
        return ClusterSpec((NodeSpec("n1", "coordinator"), NodeSpec("n2", "storage", 2)), 2, seed)
    storage = [f"n{i}" for i in range(3, n_nodes + 1)]
    total = max(8, 2 * len(storage))
    counts = {s: 0 for s in storage}
    counts[storage[-1]] = total // 2
    rest = storage[:-1] or storage
    for k in range(total - counts[storage[-1]]):
        counts[rest[k % len(rest)]] += 1
    nodes = [NodeSpec("n1", "config"), NodeSpec("n2", "coordinator")]
    nodes += [NodeSpec(s, "storage", counts[s]) for s in storage]
    return ClusterSpec(tuple(nodes), total, seed)


@dataclass(frozen=True)
class ClusterState:
    """Liveness and partition leadership as the simulator sees it."""

    up: Mapping[str, bool]
    leader_partitions: Mapping[str, int]

    @classmethod
    def initial(cls, spec: ClusterSpec) -> "ClusterState":
        return cls({n.node_id: True for n in spec.nodes}, {n.node_id: n.leader_partitions for n in spec.nodes})

    def kill(self, node_id: str) -> "ClusterState":
        """Take a node down and hand its partitions to the live node leading
        the most (ties to the smallest id)."""
        up = dict(self.up)
        up[node_id] = False
        counts = dict(self.leader_partitions)
        moved = counts[node_id]
        counts[node_id] = 0
        live = [n for n, u in up.items() if u]
        if live and moved:
            heir = min(live, key=lambda n: (-counts[n], n))
            counts[heir] += moved
        return ClusterState(up, counts)

    def system_state(self, spec: ClusterSpec) -> SystemState:
        return SystemState(
            {
                n.node_id: NodeState(self.up[n.node_id], self.leader_partitions[n.node_id], n.kind)
                for n in spec.nodes
            }
        )

    @property
    def leader(self) -> Optional[str]:
        live = [n for n, u in self.up.items() if u and self.leader_partitions[n] > 0]
        return min(live, key=lambda n: (-self.leader_partitions[n], n)) if live else None


def _partition_owners(spec: ClusterSpec, state: ClusterState) -> list[str]:
    owners = []
    for n in spec.nodes:
        if state.up[n.node_id]:
            owners.extend([n.node_id] * state.leader_partitions[n.node_id])
    live_storage = [s for s in spec.of_kind("storage") if state.up[s]]
    fill = state.leader or (live_storage[0] if live_storage else None)
    if fill is not None:
        owners.extend([fill] * (spec.total_partitions - len(owners)))
    return owners


# -- baseline --------------------------------------------------------------------


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng([int(k) for k in key])


def _ip(rng) -> str:
    return f"10.0.{rng.integers(0, 4)}.{rng.integers(2, 250)}"


def _hex(rng, n=8) -> str:
    return "".join(rng.choice(list("0123456789abcdef"), size=n))


MESSAGE_TEMPLATES = {
    "write": "write batch {pts} points to region {region} partition {part}",
    "flush": "flush memtable {mem} to /data/iotdb/seq/{file}.tsfile size {size}",
    "compaction": "compaction task {task} finished in {ms} ms",
    "replicate": "replicate batch to {ip}:10730 ok",
    "route": "route query {qid} from {ip} to {node}",
    "query_done": "query {qid} finished in {ms} ms",
    "heartbeat": "heartbeat from {node} ok",
    "partition_sync": "partition table version {ver} synced",
    "slow_query": "slow query {qid} cost {ms} ms on region {region}",
    "conn_refused": "connection to {ip}:10730 refused",
    "export_error": "export pipeline {pipe} failed to transfer tsfile /data/iotdb/export/{file}.tsfile : buffer overflow",
    "export_backlog": "export pipeline {pipe} backlog {n} events",
    "import_error": "load tablet {tablet} from /data/import/{file}.csv rejected : memory quota exceeded",
    "import_retry": "load tablet {tablet} retry {n}",
}
MESSAGE_LEVELS = {
    "slow_query": "WARN",
    "conn_refused": "ERROR",
    "export_error": "ERROR",
    "export_backlog": "WARN",
    "import_error": "ERROR",
    "import_retry": "WARN",
}


def render_message(kind: str, rng, node_id: str = "n1") -> str:
    fmt = MESSAGE_TEMPLATES[kind]
    values = {
        "pts": rng.integers(100, 5000),
        "region": rng.integers(1, 64),
        "part": rng.integers(0, 16),
        "mem": rng.integers(1, 10_000),
        "file": f"{rng.integers(1_600_000_000, 1_700_000_000)}-{rng.integers(1, 99)}-0-0",
        "size": rng.integers(1 << 16, 1 << 26),
        "task": rng.integers(1, 100_000),
        "ms": rng.integers(1, 900),
        "ip": _ip(rng),
        "qid": _hex(rng, 12),
        "node": node_id,
        "ver": rng.integers(1, 500),
        "pipe": _hex(rng, 8) + "1",
        "n": rng.integers(100, 100_000),
        "tablet": rng.integers(1, 1_000_000),
    }
    return fmt.format(**values)


def _poisson_times(rng, rate, window: Window) -> list[float]:
    k = rng.poisson(rate * window.length)
    return sorted(float(round(t, 3)) for t in rng.uniform(window.start, window.end, size=k) if t < window.end)


def _log_entries(rng, kinds_rates: Mapping[str, float], window: Window, node_id: str) -> list[LogEntry]:
    entries = []
    for kind, rate in kinds_rates.items():
        for t in _poisson_times(rng, rate, window):
            entries.append(LogEntry(min(t, np.nextafter(window.end, -np.inf)), MESSAGE_LEVELS.get(kind, "INFO"), render_message(kind, rng, node_id)))
    entries.sort(key=lambda e: e.timestamp)
    return entries


def _baseline_metrics(rng, role: str, window: Window, node_id: str) -> RawMetricSet:
    n = int(math.floor(window.length / METRIC_INTERVAL))
    ts = tuple(window.start + k * METRIC_INTERVAL for k in range(n))
    t = np.asarray(ts)
    diurnal = 0.05 * np.sin(2 * np.pi * t / 86400.0)
    series = []
    for name, level in zip(METRIC_NAMES, BASELINE_LEVELS[role]):
        base = level + rng.normal(0, 0.03) + diurnal
        vals = np.clip(base + rng.normal(0, NOISE_SD, size=n), 0.0, 1.0).round(4)
        missing = rng.random(n) < MISSING_RATE
        series.append(MetricSeries(name, ts, tuple(None if m else float(v) for v, m in zip(vals, missing))))
    return RawMetricSet(node_id, tuple(series))


def _baseline_spans(rng, spec: ClusterSpec, state: ClusterState, window: Window, index: int) -> list[TraceSpan]:
    owners = _partition_owners(spec, state)
    if not owners:
        return []
    coordinators = [c for c in spec.of_kind("coordinator") if state.up[c]]
    storage = [s for s in spec.of_kind("storage") if state.up[s]]
    spans = []
    k = rng.poisson(TRACE_RATE * window.length)
    starts = sorted(rng.uniform(window.start, max(window.start, window.end - 1.0), size=k))
    for i, t0 in enumerate(starts):
        tid = f"w{index}-t{i}"
        leader = owners[rng.integers(0, len(owners))]
        write_start = round(float(t0) + 0.001, 6)
        write_dur = round(float(rng.lognormal(np.log(0.010), 0.3)), 6)
        children = [TraceSpan(tid, "s1", "s0" if coordinators else None, leader, "write", write_start, write_dur)]
        replicas = [s for s in storage if s != leader]
        end = write_start + write_dur
        if replicas:
            replica = replicas[rng.integers(0, len(replicas))]
            rs = round(write_start + 0.002, 6)
            rd = round(float(rng.lognormal(np.log(0.005), 0.3)), 6)
            children.append(TraceSpan(tid, "s2", "s1", replica, "replicate", rs, rd))
            end = max(end, rs + rd)
        if coordinators:
            root_node = coordinators[i % len(coordinators)]
            root_dur = round(end - float(t0) + 0.001 + float(rng.uniform(0, 0.002)), 6)
            spans.append(TraceSpan(tid, "s0", None, root_node, "route_write", round(float(t0), 6), root_dur))
        spans.extend(children)
    return spans


def generate_baseline(spec: ClusterSpec, window: Window, *, index: int = 0, state: Optional[ClusterState] = None) -> list[TelemetryBundle]:
    """Normal-operation bundles for every live node; deterministic in (seed, index)."""
    state = state or ClusterState.initial(spec)
    spans = _baseline_spans(_rng(spec.seed, index, 0), spec, state, window, index)
    bundles = []
    for pos, n in enumerate(spec.nodes):
        if not state.up[n.node_id]:
            continue
        rng = _rng(spec.seed, index, 1, pos)
        metrics = _baseline_metrics(rng, n.kind, window, n.node_id)
        logs = _log_entries(rng, LOG_RATES[n.kind], window, n.node_id)
        bundles.append(
            TelemetryBundle(
                n.node_id,
                window,
                metrics,
                LogSequence(n.node_id, tuple(logs)),
                tuple(s for s in spans if s.node_id == n.node_id),
            )
        )
    return bundles


# -- faults ----------------------------------------------------------------------


@dataclass(frozen=True)
class FaultSpec:
    label: str
    target_nodes: tuple[str, ...]
    window: Window
    intensity: float = DEFAULT_INTENSITY

    def __post_init__(self):
        if self.label not in FAULT_LABELS:
            raise InvalidArgumentError(f"unknown fault label {self.label!r}")
        object.__setattr__(self, "target_nodes", tuple(self.target_nodes))
        if not self.target_nodes:
            raise InvalidArgumentError("a fault needs at least one target node")
        if not 0 < self.intensity <= 1:
            raise InvalidArgumentError("intensity must be in (0, 1]")


def _saturate(series: MetricSeries, window: Window, amount: float) -> MetricSeries:
    vals = tuple(
        None if v is None else (round(min(1.0, v + amount * (1.0 - v)), 4) if window.contains(t) else v)
        for t, v in zip(series.timestamps, series.values)
    )
    return MetricSeries(series.name, series.timestamps, vals)


def _blip(series: MetricSeries, window: Window, rng, amplitude: float, width: int = 3) -> MetricSeries:
    idx = [i for i, t in enumerate(series.timestamps) if window.contains(t)]
    if not idx:
        return series
    at = idx[int(rng.integers(0, max(1, len(idx) - width)))]
    vals = list(series.values)
    for i in range(at, min(at + width, len(vals))):
        if vals[i] is not None:
            vals[i] = round(min(1.0, vals[i] + amplitude), 4)
    return MetricSeries(series.name, series.timestamps, tuple(vals))


def _map_metrics(bundle: TelemetryBundle, fn: Mapping[str, callable]) -> RawMetricSet:
    return RawMetricSet(
        bundle.node_id, tuple(fn[s.name](s) if s.name in fn else s for s in bundle.metrics.series)
    )


def _add_logs(bundle: TelemetryBundle, entries: Sequence[LogEntry]) -> LogSequence:
    merged = sorted(list(bundle.logs.entries) + list(entries), key=lambda e: e.timestamp)
    return LogSequence(bundle.node_id, tuple(merged))


def _fault_logs(rng, kinds_counts: Mapping[str, int], window: Window, node_id: str) -> list[LogEntry]:
    out = []
    for kind, count in kinds_counts.items():
        for t in sorted(rng.uniform(window.start, window.end, size=count)):
            t = float(round(t, 3))
            if t >= window.end:
                t = float(np.nextafter(window.end, -np.inf))
            out.append(LogEntry(t, MESSAGE_LEVELS.get(kind, "INFO"), render_message(kind, rng, node_id)))
    return out


def _scale_spans(spans, window: Window, fn) -> tuple[TraceSpan, ...]:
    return tuple(replace(s, duration=round(fn(s), 6)) if window.contains(s.start) else s for s in spans)


def inject_fault(bundles: Sequence[TelemetryBundle], fault: FaultSpec, seed: int = 0) -> tuple[list[TelemetryBundle], tuple]:
    """Apply a fault signature to the target nodes' bundles.

    Returns the new bundle list and the ground-truth entry ``(label, targets)``.
    """
    present = {b.node_id for b in bundles}
    stray = set(fault.target_nodes) - present
    if stray:
        raise InvalidArgumentError(f"fault targets {sorted(stray)} not in the bundles")
    for b in bundles:
        if b.window is not None and not (b.window.start <= fault.window.start and fault.window.end <= b.window.end):
            raise InvalidArgumentError("fault window must lie within the bundle window")

    targets = set(fault.target_nodes)
    w, x = fault.window, fault.intensity
    out = []
    for pos, b in enumerate(bundles):
        if b.node_id not in targets:
            out.append(b)
            continue
        rng = _rng(seed, pos, 7)
        metrics, logs, spans = b.metrics, b.logs, b.spans
        label = fault.label
        if label == "cpu_saturation":
            metrics = _map_metrics(b, {"cpu_usage": lambda s: _saturate(s, w, x)})
        elif label == "io_saturation":
            metrics = _map_metrics(b, {"disk_io_util": lambda s: _saturate(s, w, x)})
        elif label == "memory_saturation":
            metrics = _map_metrics(b, {"memory_usage": lambda s: _saturate(s, w, x)})
        elif label == "network_bandwidth_limit":
            metrics = _map_metrics(b, {"net_util": lambda s: _saturate(s, w, x)})
            spans = _scale_spans(spans, w, lambda s: s.duration * (1 + 3 * x))
        elif label == "network_delay":
            spans = _scale_spans(spans, w, lambda s: s.duration + 0.05 + 0.25 * x)
        elif label == "slow_queries":
            slow = rng.random(len(spans)) < 0.15
            factor = 5 + 20 * x
            spans = tuple(
                replace(s, duration=round(s.duration * factor, 6)) if slow[i] and w.contains(s.start) else s
                for i, s in enumerate(spans)
            )
            logs = _add_logs(b, _fault_logs(rng, {"slow_query": int(rng.poisson(8 * x)) + 1}, w, b.node_id))
        elif label == "workload_spike":
            metrics = _map_metrics(
                b,
                {
                    "write_rate": lambda s: _saturate(s, w, 0.8 * x),
                    "cpu_usage": lambda s: _saturate(s, w, 0.25 * x),
                },
            )
            rates = {k: r * 2 * x for k, r in LOG_RATES["storage"].items() if k in ("write", "replicate")}
            logs = _add_logs(b, _log_entries(rng, rates, w, b.node_id))
            extra = []
            for i, t in enumerate(_poisson_times(rng, TRACE_RATE * 2 * x, w)):
                dur = round(float(rng.lognormal(np.log(0.012), 0.3)), 6)
                extra.append(TraceSpan(f"spike-{b.node_id}-{i}", "s0", None, b.node_id, "write", t, dur))
            spans = tuple(spans) + tuple(extra)
        elif label == "excessive_export":
            metrics = _map_metrics(b, {"disk_io_util": lambda s: _blip(s, w, rng, 1.5 * NOISE_SD)})
            logs = _add_logs(
                b,
                _fault_logs(rng, {"export_error": int(rng.poisson(15 * x)) + 2, "export_backlog": int(rng.poisson(10 * x)) + 1}, w, b.node_id),
            )
        elif label == "excessive_import":
            metrics = _map_metrics(b, {"memory_usage": lambda s: _blip(s, w, rng, 1.5 * NOISE_SD)})
            logs = _add_logs(
                b,
                _fault_logs(rng, {"import_error": int(rng.poisson(15 * x)) + 2, "import_retry": int(rng.poisson(10 * x)) + 1}, w, b.node_id),
            )
        elif label == "network_partition":
            logs = _add_logs(b, _fault_logs(rng, {"conn_refused": int(rng.poisson(6 * x)) + 1}, w, b.node_id))
        out.append(replace(b, metrics=metrics, logs=logs, spans=tuple(spans)))

    if fault.label == "network_partition":
        out = _sever(out, targets, w)
    return out, (fault.label, tuple(fault.target_nodes))


def _sever(bundles: Sequence[TelemetryBundle], side: set, window: Window) -> list[TelemetryBundle]:
    """Drop every span whose parent ran on the other side of the partition."""
    where = {}
    for b in bundles:
        for s in b.spans:
            where[(s.trace_id, s.span_id)] = s.node_id
    out = []
    for b in bundles:
        kept = []
        for s in b.spans:
            parent_node = where.get((s.trace_id, s.parent_span_id)) if s.parent_span_id else None
            crosses = parent_node is not None and ((parent_node in side) != (s.node_id in side))
            if crosses and window.contains(s.start):
                continue
            kept.append(s)
        out.append(b if len(kept) == len(b.spans) else replace(b, spans=tuple(kept)))
    return out


# -- campaigns -------------------------------------------------------------------


@dataclass(frozen=True)
class CampaignWindow:
    index: int
    window: Window
    bundles: tuple[TelemetryBundle, ...]
    state: SystemState
    truth: Optional[tuple]  # (label, targets) or None for a normal window

    @property
    def key(self) -> str:
        return window_key(self.window)

    @property
    def label(self) -> str:
        return self.truth[0] if self.truth else "normal"


def campaign_plan(spec: ClusterSpec, per_type: int, normals: int) -> list[Optional[str]]:
    if per_type < 1:
        raise InvalidArgumentError("per_type must be >= 1")
    if normals < 0:
        raise InvalidArgumentError("normals must be >= 0")
    labels: list[Optional[str]] = [l for l in FAULT_LABELS for _ in range(per_type)] + [None] * normals
    order = _rng(spec.seed, 999).permutation(len(labels))
    return [labels[i] for i in order]


def iter_campaign(
    spec: ClusterSpec,
    per_type: int,
    normals: int,
    *,
    window_length: float = DEFAULT_WINDOW,
    intensity: float = DEFAULT_INTENSITY,
    kill_leader_at: Optional[int] = None,
    start: float = 0.0,
) -> Iterator[CampaignWindow]:
    state = ClusterState.initial(spec)
    for i, label in enumerate(campaign_plan(spec, per_type, normals)):
        if kill_leader_at is not None and i == kill_leader_at and state.leader is not None:
            state = state.kill(state.leader)
        window = Window(start + i * window_length, start + (i + 1) * window_length)
        bundles = generate_baseline(spec, window, index=i, state=state)
        truth = None
        if label is not None:
            live_storage = [s for s in spec.of_kind("storage") if state.up[s]] or [b.node_id for b in bundles]
            target = live_storage[int(_rng(spec.seed, i, 2).integers(0, len(live_storage)))]
            fault = FaultSpec(label, (target,), window, intensity)
            bundles, truth = inject_fault(bundles, fault, seed=spec.seed * 100_003 + i)
        yield CampaignWindow(i, window, tuple(bundles), state.system_state(spec), truth)


def generate_campaign(spec: ClusterSpec, per_type: int, normals: int, out_dir, **kwargs) -> tuple[Path, dict]:
    """Write a labeled dataset directory and return it with the ground truth.

    Layout::

        cluster.json   truth.json   windows.json
        windows/w0000/{state.json, n1.jsonl, ...}
    """
    out = Path(out_dir)
    wdir = out / "windows"
    if wdir.exists():
        shutil.rmtree(wdir)
    wdir.mkdir(parents=True)
    truth: dict = {}
    manifest = []
    for cw in iter_campaign(spec, per_type, normals, **kwargs):
        d = wdir / f"w{cw.index:04d}"
        d.mkdir()
        for b in cw.bundles:
            (d / f"{b.node_id}.jsonl").write_text(dumps_bundle(b), encoding="utf-8")
        _write_json(d / "state.json", cw.state.to_json())
        truth[cw.key] = {"label": cw.truth[0], "targets": list(cw.truth[1])} if cw.truth else None
        manifest.append({"key": cw.key, "dir": d.name, "window": [cw.window.start, cw.window.end]})
    _write_json(out / "cluster.json", spec.to_config())
    _write_json(out / "truth.json", truth)
    _write_json(out / "windows.json", manifest)
    return out, truth


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- reading datasets ------------------------------------------------------------


@dataclass(frozen=True)
class DatasetWindow:
    key: str
    window: Window
    path: Path

    def bundles(self) -> list[TelemetryBundle]:
        return [load_bundle(p) for p in sorted(self.path.glob("*.jsonl"))]

    def state(self) -> SystemState:
        with open(self.path / "state.json", encoding="utf-8") as fh:
            return SystemState.from_json(json.load(fh))


class Dataset:
    def __init__(self, root):
        self.root = Path(root)
        if not (self.root / "windows.json").exists():
            raise ConfigError(f"{self.root} is not a dataset directory (no windows.json)")
        with open(self.root / "windows.json", encoding="utf-8") as fh:
            self._manifest = json.load(fh)

    def __len__(self):
        return len(self._manifest)

    def __iter__(self) -> Iterator[DatasetWindow]:
        for m in self._manifest:
            yield DatasetWindow(m["key"], Window(*m["window"]), self.root / "windows" / m["dir"])

    @property
    def cluster_config(self) -> dict:
        with open(self.root / "cluster.json", encoding="utf-8") as fh:
            return json.load(fh)

    @property
    def truth(self) -> dict:
        return load_truth(self.root / "truth.json")


def load_truth(path) -> dict:
    """``{window_key: (label, targets) | None}``."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return {k: (v["label"], tuple(v.get("targets", ()))) if v else None for k, v in raw.items()}
