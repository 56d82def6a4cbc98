"""Scoring against ground truth, the DTW nearest-neighbour baseline, and the
metrics-vs-logs identifiability experiment."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import AlignmentError, ChannelError, InsufficientDataError, InvalidArgumentError, LabelError
from .labels import DIAGNOSIS_LABELS, FAULT_LABELS, NORMAL, UNKNOWN
from .logs import LogParser
from .metrics import preprocess
from .tasks import query_marker
from .telemetry import TelemetryBundle, Window

LOG_BIN_SECONDS = 5.0
IDENTIFIABLE_F1 = 0.5
CHANNELS = ("metrics", "logs")


# -- scoring ---------------------------------------------------------------------


def f1_score(precision: float, recall: float) -> float:
    for name, v in (("precision", precision), ("recall", recall)):
        if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
            raise InvalidArgumentError(f"{name} must be in [0, 1], got {v!r}")
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int = 0

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, tn: int = 0) -> "Metrics":
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        return cls(p, r, f1_score(p, r), tp, fp, fn, tn)

    def to_json(self) -> dict:
        return asdict(self)


def _aligned(predictions, truth) -> list[tuple[str, object, object]]:
    pred = dict(predictions.items() if isinstance(predictions, Mapping) else predictions)
    true = dict(truth.items() if isinstance(truth, Mapping) else truth)
    if not pred and not true:
        raise AlignmentError("nothing to score")
    if set(pred) != set(true):
        extra = sorted(map(str, set(pred) - set(true)))[:3]
        missing = sorted(map(str, set(true) - set(pred)))[:3]
        raise AlignmentError(f"window sets differ (unexpected {extra}, missing {missing})")
    return [(k, pred[k], true[k]) for k in sorted(pred, key=str)]


def score_detection(predictions, truth) -> Metrics:
    """Binary scores with anomalous as the positive class.

    Both arguments map a window (or its key) to a bool, or are lists of
    ``(window, bool)`` pairs.
    """
    tp = fp = fn = tn = 0
    for _, p, t in _aligned(predictions, truth):
        p, t = bool(p), bool(t)
        tp += p and t
        fp += p and not t
        fn += t and not p
        tn += not p and not t
    return Metrics.from_counts(tp, fp, fn, tn)


@dataclass(frozen=True)
class DiagnosisScores:
    per_class: Mapping[str, Metrics]
    macro: Metrics

    def to_json(self) -> dict:
        return {"per_class": {k: m.to_json() for k, m in self.per_class.items()}, "macro": self.macro.to_json()}


_PREDICTABLE = set(DIAGNOSIS_LABELS) | {NORMAL}
_TRUE = set(FAULT_LABELS) | {NORMAL}


def score_diagnosis(predictions, truth) -> DiagnosisScores:
    """One-vs-rest scores per fault label and their macro average.

    Truth labels are fault labels or ``normal``; predictions may also be
    ``unknown``. The macro average runs over fault labels that occur in
    either side.
    """
    rows = _aligned(predictions, truth)
    for _, p, t in rows:
        if p not in _PREDICTABLE:
            raise LabelError(f"predicted label {p!r} outside the closed set")
        if t not in _TRUE:
            raise LabelError(f"true label {t!r} outside the closed set")
    seen = [l for l in FAULT_LABELS if any(l in (p, t) for _, p, t in rows)]
    per_class = {}
    for label in seen:
        tp = sum(p == label and t == label for _, p, t in rows)
        fp = sum(p == label and t != label for _, p, t in rows)
        fn = sum(t == label and p != label for _, p, t in rows)
        per_class[label] = Metrics.from_counts(tp, fp, fn, len(rows) - tp - fp - fn)
    if per_class:
        n = len(per_class)
        p = sum(m.precision for m in per_class.values()) / n
        r = sum(m.recall for m in per_class.values()) / n
        f = sum(m.f1 for m in per_class.values()) / n
        macro = Metrics(p, r, f, *(sum(getattr(m, c) for m in per_class.values()) for c in ("tp", "fp", "fn", "tn")))
    else:
        macro = Metrics(1.0, 1.0, 1.0, 0, 0, 0, len(rows))
    return DiagnosisScores(per_class, macro)


def report_predictions(report: Mapping) -> tuple[bool, str]:
    """(detected anomalous, diagnosed label) from a report document."""
    anomalous = bool(report["verdict"]["anomalous"])
    diagnosis = report.get("diagnosis")
    if not anomalous:
        return False, NORMAL
    return True, diagnosis["label"] if diagnosis else UNKNOWN


def evaluate_reports(reports_dir, truth: Mapping[str, Optional[tuple]]) -> dict:
    """Score every ``<window>.json`` report against ``{key: (label, targets) | None}``."""
    reports = {}
    for path in sorted(Path(reports_dir).glob("*.json")):
        with open(path, encoding="utf-8") as fh:
            reports[path.stem] = json.load(fh)
    det_pred, diag_pred = {}, {}
    degraded = errors = 0
    for key, doc in reports.items():
        det_pred[key], diag_pred[key] = report_predictions(doc)
        degraded += bool(doc["verdict"].get("degraded"))
        errors += doc.get("error") is not None
    det_true = {k: v is not None for k, v in truth.items()}
    diag_true = {k: v[0] if v else NORMAL for k, v in truth.items()}
    detection = score_detection(det_pred, det_true)
    diagnosis = score_diagnosis(diag_pred, diag_true)
    return {
        "windows": len(truth),
        "detection": detection.to_json(),
        "diagnosis": diagnosis.to_json(),
        "degraded_verdicts": degraded,
        "stage_errors": errors,
    }


# -- DTW baseline ----------------------------------------------------------------


dtw_distance = _kernels.dtw_distance


def metric_channel(bundles: Sequence[TelemetryBundle]) -> dict[str, np.ndarray]:
    """Per-metric cluster maximum after imputation."""
    per_name: dict[str, list[np.ndarray]] = {}
    for b in bundles:
        if b.metrics is None:
            continue
        pre = preprocess(b.metrics)
        for series in pre.series:
            per_name.setdefault(series.name, []).append(np.asarray(series.values, dtype=float))
    out = {}
    for name, rows in per_name.items():
        n = min(len(r) for r in rows)
        out[name] = np.max(np.stack([r[:n] for r in rows]), axis=0)
    return out


def log_channel(bundles: Sequence[TelemetryBundle], parser: LogParser, window: Optional[Window] = None, bin_seconds: float = LOG_BIN_SECONDS) -> dict[str, np.ndarray]:
    """Per-template entry counts, summed over nodes, in fixed time bins."""
    window = window or next((b.window for b in bundles if b.window is not None), None)
    if window is None:
        return {}
    nbins = max(1, math.ceil(window.length / bin_seconds))
    out: dict[str, np.ndarray] = {}
    for b in bundles:
        for entry in b.logs.entries:
            tid, _ = parser.parse(entry)
            pattern = parser.template(tid).pattern
            row = out.setdefault(pattern, np.zeros(nbins))
            i = min(nbins - 1, int((entry.timestamp - window.start) // bin_seconds))
            row[i] += 1
    return out


def channel_series(bundles, channel: str, parser: Optional[LogParser] = None) -> dict[str, np.ndarray]:
    if channel == "metrics":
        series = metric_channel(bundles)
    elif channel == "logs":
        series = log_channel(bundles, parser or LogParser())
    else:
        raise InvalidArgumentError(f"unknown channel {channel!r}")
    if not series:
        raise ChannelError(f"no {channel} data in the window")
    return series


def _as_series(item, channel, parser):
    if isinstance(item, Mapping):
        if not item:
            raise ChannelError(f"no {channel} data in the window")
        return {k: np.asarray(v, dtype=float) for k, v in item.items()}
    return channel_series(item, channel, parser)


def _summed_distance(a: Mapping[str, np.ndarray], b: Mapping[str, np.ndarray]) -> float:
    total = 0.0
    for name in sorted(set(a) | set(b)):
        x = a.get(name)
        y = b.get(name)
        if x is None:
            x = np.zeros(len(y))
        if y is None:
            y = np.zeros(len(x))
        total += dtw_distance(x, y)
    return total


def dtw_classify(query, references: Sequence[tuple[str, object]], channel: str = "metrics", *, parser: Optional[LogParser] = None) -> str:
    """1-nearest-neighbour label over summed per-series DTW distances.

    ``query`` and each reference are either bundle lists or already
    extracted ``{series name: values}`` mappings. Equal distances go to the
    alphabetically first label.
    """
    if channel not in CHANNELS:
        raise InvalidArgumentError(f"unknown channel {channel!r}")
    if not references:
        raise InvalidArgumentError("need at least one reference window")
    parser = parser or LogParser()
    q = _as_series(query, channel, parser)
    best = None
    for label, ref in references:
        d = _summed_distance(q, _as_series(ref, channel, parser))
        if best is None or (d, label) < best:
            best = (d, label)
    return best[1]


def loo_distance_matrix(series: Sequence[Mapping[str, np.ndarray]]) -> np.ndarray:
    """Pairwise summed DTW distances between windows (zero fill for absent series)."""
    names = sorted({n for s in series for n in s})
    n = len(series)
    total = np.zeros((n, n))
    for name in names:
        lengths = [len(s[name]) for s in series if name in s]
        width = lengths[0] if lengths else 0
        seqs = [np.asarray(s[name], dtype=float) if name in s else np.zeros(width) for s in series]
        total += _kernels.dtw_matrix(seqs)
    return total


def loo_predictions(labels: Sequence[str], dist: np.ndarray) -> list[str]:
    preds = []
    for i in range(len(labels)):
        best = None
        for j in range(len(labels)):
            if i == j:
                continue
            cand = (dist[i, j], labels[j])
            if best is None or cand < best:
                best = cand
        preds.append(best[1])
    return preds


def one_vs_rest_f1(labels: Sequence[str], preds: Sequence[str], label: str) -> float:
    tp = sum(p == label and t == label for p, t in zip(preds, labels))
    fp = sum(p == label and t != label for p, t in zip(preds, labels))
    fn = sum(t == label and p != label for p, t in zip(preds, labels))
    return Metrics.from_counts(tp, fp, fn).f1


@dataclass(frozen=True)
class Table2Result:
    f1: Mapping[str, Mapping[str, float]]
    windows: int

    def identifiable(self, channel: str, label: str) -> bool:
        return self.f1[channel][label] > IDENTIFIABLE_F1

    def to_json(self) -> dict:
        return {
            "windows": self.windows,
            "threshold": IDENTIFIABLE_F1,
            "f1": {c: {l: round(v, 6) for l, v in row.items()} for c, row in self.f1.items()},
            "identifiable": {c: {l: v > IDENTIFIABLE_F1 for l, v in row.items()} for c, row in self.f1.items()},
        }


def table2_experiment(windows: Iterable[tuple[str, Sequence[TelemetryBundle]]]) -> Table2Result:
    """Leave-one-out 1-NN DTW per channel over labeled fault windows.

    ``windows`` yields ``(label, bundles)``; normal windows should be left
    out by the caller. One log parser is fit across the whole set so that
    template identities agree between windows.
    """
    items = list(windows)
    labels = [l for l, _ in items]
    counts = {l: labels.count(l) for l in set(labels)}
    short = sorted(l for l, c in counts.items() if c < 2)
    if not items or short:
        raise InsufficientDataError(f"need at least 2 windows per label; short: {short or 'all'}")
    parser = LogParser()
    present = [l for l in FAULT_LABELS if l in counts] + sorted(set(counts) - set(FAULT_LABELS))
    result = {}
    for channel in CHANNELS:
        series = [channel_series(b, channel, parser) for _, b in items]
        preds = loo_predictions(labels, loo_distance_matrix(series))
        result[channel] = {l: one_vs_rest_f1(labels, preds, l) for l in present}
    return Table2Result(result, len(items))


def dataset_fault_windows(dataset) -> list[tuple[str, list[TelemetryBundle]]]:
    truth = dataset.truth
    out = []
    for w in dataset:
        t = truth.get(w.key)
        if t is not None:
            out.append((t[0], w.bundles()))
    return out


# -- oracle mock -----------------------------------------------------------------


STAGE = {
    "detect": "<<stage:detect>>",
    "rationale": "<<stage:detect-rationale>>",
    "diagnose": "<<stage:diagnose>>",
    "mitigate": "<<stage:mitigate>>",
}

MITIGATIONS = {
    "cpu_saturation": ("Throttle heavy queries", "Limit concurrent query slots and move hot regions off the node."),
    "io_saturation": ("Relieve disk pressure", "Pause compaction and spread flushes over more disks."),
    "memory_saturation": ("Reclaim memory", "Shrink memtable and cache quotas, then restart the node if usage persists."),
    "network_delay": ("Check network path", "Inspect link latency to the node and fail over replicas if it stays high."),
    "network_bandwidth_limit": ("Raise bandwidth budget", "Lift the traffic shaping limit or reroute replication traffic."),
    "network_partition": ("Heal the partition", "Restore connectivity and let the consensus group catch up before serving writes."),
    "workload_spike": ("Absorb the spike", "Enable write rate limiting and add storage capacity for the hot partitions."),
    "slow_queries": ("Kill slow queries", "Terminate long-running queries and add the missing time filters."),
    "excessive_export": ("Pace the export pipeline", "Lower export pipeline parallelism and drain the backlog off-peak."),
    "excessive_import": ("Pace data import", "Batch the load tablets and raise the import memory quota gradually."),
}


def _window_from_key(key: str, length: float) -> Window:
    start = float(key)
    return Window(start, start + length)


def oracle_mock_script(truth: Mapping[str, Optional[tuple]], *, window_length: float = 60.0, flip_rate: float = 0.0, seed: int = 0) -> dict:
    """A mock-provider script that answers every stage from ground truth.

    ``flip_rate`` inverts that fraction of detection answers, taken
    separately from the faulty and the normal windows so the counts are
    exact. Returns the script plus the keys whose answers were flipped.
    """
    if not 0.0 <= flip_rate <= 1.0:
        raise InvalidArgumentError("flip_rate must be in [0, 1]")
    rng = np.random.default_rng(seed)
    keys = sorted(truth, key=lambda k: float(k))
    flipped = set()
    for group in ([k for k in keys if truth[k]], [k for k in keys if not truth[k]]):
        n = int(round(flip_rate * len(group)))
        if n:
            flipped.update(group[i] for i in rng.choice(len(group), size=n, replace=False))
    rules = []
    for key in keys:
        t = truth[key]
        marker = query_marker(_window_from_key(key, window_length))
        anomalous = (t is not None) != (key in flipped)
        rules.append({"match": [STAGE["detect"], marker], "response": _tool("report_verdict", {"answer": "yes" if anomalous else "no"})})
        if t is not None:
            label, targets = t[0], list(t[1])
            rules.append({"match": [STAGE["diagnose"], marker], "response": _tool("report_diagnosis", {"label": label, "suspect_nodes": targets, "rationale": f"signature of {label} on {', '.join(targets)}"})})
            title, detail = MITIGATIONS[label]
            rules.append({"match": [STAGE["mitigate"], marker], "response": _tool("propose_mitigation", {"actions": [{"title": title, "detail": detail, "targets": targets}], "rationale": f"standard response to {label}"})})
        else:
            rules.append({"match": [STAGE["diagnose"], marker], "response": _tool("report_diagnosis", {"label": UNKNOWN, "suspect_nodes": [], "rationale": "no fault signature matches"})})
    rules.append({"match": [STAGE["rationale"]], "response": {"text": "Verdict follows the node-level metric and log evidence in the digest."}})
    return {"default": {"text": "no scripted response"}, "rules": rules, "flipped": sorted(flipped, key=float)}


def expected_flip_f1(positives: int, negatives: int, flip_rate: float) -> float:
    """Detection F1 when exactly ``round(rate * n)`` answers per class are inverted."""
    fn = int(round(flip_rate * positives))
    fp = int(round(flip_rate * negatives))
    tp = positives - fn
    return 2 * tp / (2 * tp + fp + fn) if tp else 0.0


def _tool(name: str, arguments: dict) -> dict:
    return {"tool_call": {"name": name, "arguments": arguments}}


def dump_json(obj, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


__all__ = [
    "Metrics",
    "DiagnosisScores",
    "Table2Result",
    "f1_score",
    "score_detection",
    "score_diagnosis",
    "evaluate_reports",
    "dtw_distance",
    "dtw_classify",
    "table2_experiment",
    "oracle_mock_script",
    "expected_flip_f1",
]
