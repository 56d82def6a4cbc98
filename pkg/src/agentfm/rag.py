"""Labeled-example store for few-shot retrieval.

Examples are ranked by cosine similarity over engineered features that are
z-normalized with the store's own per-dimension statistics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Collection, Iterable, Optional, Sequence

import numpy as np

from .errors import LabelError, RetrievalError, ValidationError
from .labels import EXAMPLE_LABELS

FEATURE_METRICS = ("cpu_usage", "memory_usage", "disk_io_util", "net_util", "write_rate")
METRIC_STATS = ("mean", "std", "max_abs_z", "slope")
TOP_TEMPLATES = 3
LOG_FEATURES = ("error_rate",) + tuple(f"top{i + 1}_freq" for i in range(TOP_TEMPLATES)) + ("run_count", "entry_count")
TRACE_FEATURES = ("error_span_fraction", "p95_duration")

FEATURE_NAMES = (
    tuple(f"{m}.{s}" for m in FEATURE_METRICS for s in METRIC_STATS)
    + tuple(f"logs.{f}" for f in LOG_FEATURES)
    + tuple(f"traces.{f}" for f in TRACE_FEATURES)
)
DIM = len(FEATURE_NAMES)
DEFAULT_K = 4


def _metric_block(stats_per_node: Sequence[dict]) -> list[float]:
    out = []
    for m in FEATURE_METRICS:
        rows = [s[m] for s in stats_per_node if m in s]
        if not rows:
            out.extend([0.0] * len(METRIC_STATS))
            continue
        out.append(max(r["mean"] for r in rows))
        out.append(max(r["std"] for r in rows))
        out.append(max(r["max_abs_z"] for r in rows))
        out.append(max((r["slope"] for r in rows), key=abs))
    return out


def _log_block(level_counts: dict, template_counts: dict, run_count: int) -> list[float]:
    n = sum(level_counts.values())
    if n == 0:
        return [0.0] * len(LOG_FEATURES)
    top = sorted(template_counts.values(), reverse=True)[:TOP_TEMPLATES]
    top += [0] * (TOP_TEMPLATES - len(top))
    return [level_counts.get("ERROR", 0) / n] + [c / n for c in top] + [float(run_count), float(n)]


def _trace_block(span_stats: dict) -> list[float]:
    count = span_stats.get("count", 0)
    if not count:
        return [0.0, 0.0]
    return [span_stats.get("errors", 0) / count, float(span_stats.get("p95", 0.0))]


def featurize(digest) -> np.ndarray:
    """Raw (un-normalized) feature vector for a NodeDigest or ClusterDigest."""
    if hasattr(digest, "per_node"):
        nodes = list(digest.per_node)
        levels: dict = {}
        templates: dict = {}
        runs = 0
        for d in nodes:
            for k, v in d.level_counts.items():
                levels[k] = levels.get(k, 0) + v
            for k, v in d.template_counts.items():
                templates[k] = templates.get(k, 0) + v
            runs += len(d.log_runs)
        vec = _metric_block([d.metric_stats for d in nodes]) + _log_block(levels, templates, runs) + _trace_block(digest.span_stats)
    else:
        vec = (
            _metric_block([digest.metric_stats])
            + _log_block(digest.level_counts, digest.template_counts, len(digest.log_runs))
            + _trace_block(digest.span_stats)
        )
    arr = np.asarray(vec, dtype=float)
    if arr.shape != (DIM,) or not np.isfinite(arr).all():
        raise ValidationError("feature vector must be finite with fixed dimension", field="features")
    return arr


@dataclass(frozen=True)
class LabeledExample:
    id: str
    digest_text: str
    features: tuple[float, ...]
    label: str

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(float(x) for x in self.features))
        if not all(math.isfinite(x) for x in self.features):
            raise ValidationError("features must be finite", field="features")
        if self.label not in EXAMPLE_LABELS:
            raise LabelError(f"unknown label {self.label!r}")

    def to_json(self) -> dict:
        return {"id": self.id, "label": self.label, "features": list(self.features), "digest_text": self.digest_text}

    @classmethod
    def from_json(cls, obj) -> "LabeledExample":
        return cls(obj["id"], obj["digest_text"], obj["features"], obj["label"])


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    if np.array_equal(u, v):
        return 1.0
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


class ExampleStore:
    def __init__(self, examples: Iterable[LabeledExample] = ()):
        self._examples: dict[str, LabeledExample] = {}
        self._stats = None
        for ex in examples:
            self.add_example(ex)

    def __len__(self):
        return len(self._examples)

    def __iter__(self):
        return iter(self._examples.values())

    @property
    def dim(self) -> Optional[int]:
        for ex in self._examples.values():
            return len(ex.features)
        return None

    def add_example(self, example: LabeledExample) -> None:
        if example.label not in EXAMPLE_LABELS:
            raise LabelError(f"unknown label {example.label!r}")
        if self.dim is not None and len(example.features) != self.dim:
            raise ValidationError(f"expected {self.dim} features, got {len(example.features)}", field="features")
        # dict assignment keeps the original slot on upsert
        self._examples[example.id] = example
        self._stats = None

    def _statistics(self):
        if self._stats is None:
            X = np.array([ex.features for ex in self._examples.values()], dtype=float)
            if len(X) < 2:
                self._stats = (np.zeros(X.shape[1] if X.size else 0), None)
            else:
                std = X.std(axis=0)
                self._stats = (X.mean(axis=0), np.where(std > 0, std, 1.0))
        return self._stats

    def normalize(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        if len(self._examples) < 2:
            return x
        mean, std = self._statistics()
        return (x - mean) / std

    def similarities(self, query) -> list[tuple[float, LabeledExample]]:
        q = self.normalize(query)
        return [(cosine(q, self.normalize(ex.features)), ex) for ex in self._examples.values()]

    def retrieve(self, query, k: int = DEFAULT_K, label_filter: Optional[Collection[str]] = None) -> list[LabeledExample]:
        if not self._examples:
            raise RetrievalError("example store is empty")
        if k < 1:
            raise ValueError("k must be >= 1")
        q = np.asarray(query, dtype=float)
        if self.dim is not None and q.shape != (self.dim,):
            raise ValidationError(f"query has {q.size} features, store has {self.dim}", field="features")
        scored = [
            (i, sim, ex)
            for i, (sim, ex) in enumerate(self.similarities(q))
            if label_filter is None or ex.label in label_filter
        ]
        scored.sort(key=lambda t: (-t[1], t[0]))
        return [ex for _, _, ex in scored[:k]]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for ex in self._examples.values():
                fh.write(json.dumps(ex.to_json(), allow_nan=False) + "\n")

    @classmethod
    def load(cls, path) -> "ExampleStore":
        with open(path, encoding="utf-8") as fh:
            return cls(LabeledExample.from_json(json.loads(ln)) for ln in fh if ln.strip())
