"""Log agent: template mining, run-length sequence compression, and
LLM-backed semantic compression into a few operational elements."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import GatewayError, SummarizationError, ValidationError
from .llm import ChatRequest, Message
from .telemetry import LOG_LEVELS, LogEntry, LogSequence

WILDCARD = "<*>"
SIMILARITY_THRESHOLD = 0.5
NO_ACTIVITY = "no activity"

_MASKS = [
    re.compile(r"\d{1,3}(?:\.\d{1,3}){3}(?::\d+)?"),  # IPv4[:port]
    re.compile(r"[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}"),
    re.compile(r"0[xX][0-9a-fA-F]+|(?=[0-9a-fA-F]*\d)(?=[0-9a-fA-F]*[a-fA-F])[0-9a-fA-F]{8,}"),
    re.compile(r"[\w.\-]*/[\w.\-/]*"),  # paths
    re.compile(r"[-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?[a-zA-Z%]{0,3}"),  # numbers, optional unit
    re.compile(re.escape(WILDCARD)),
]


def is_variable(token: str) -> bool:
    return any(m.fullmatch(token) for m in _MASKS)


def tokenize(message: str) -> list[str]:
    # single-space split keeps reconstruction exact, runs of spaces included
    return message.split(" ")


@dataclass(frozen=True)
class EventTemplate:
    template_id: int
    pattern: str
    level: str = "INFO"

    def __post_init__(self):
        if not self.pattern:
            raise ValidationError("must be non-empty", field="template.pattern")

    @property
    def tokens(self) -> list[str]:
        return tokenize(self.pattern)

    @property
    def constants(self) -> list[str]:
        return [t for t in self.tokens if t and t != WILDCARD]

    def fill(self, params: Sequence[str]) -> str:
        params = iter(params)
        out = [next(params) if t == WILDCARD else t for t in self.tokens]
        rest = list(params)
        if rest:
            raise ValueError(f"{len(rest)} unused parameters for {self.pattern!r}")
        return " ".join(out)


class LogParser:
    """Online fixed-depth template miner.

    Leaves are keyed on (token count, first token) after variable masking;
    within a leaf a message joins the most similar template if at least half
    its tokens match that template's constants (lowest id wins ties).
    """

    def __init__(self, threshold: float = SIMILARITY_THRESHOLD):
        self.threshold = threshold
        self._leaves: dict[tuple[int, str], list[int]] = {}
        self._tokens: dict[int, list[str]] = {}
        self._levels: dict[int, str] = {}

    def __len__(self):
        return len(self._tokens)

    @property
    def templates(self) -> dict[int, EventTemplate]:
        return {
            tid: EventTemplate(tid, " ".join(toks), self._levels[tid]) for tid, toks in self._tokens.items()
        }

    def template(self, tid: int) -> EventTemplate:
        return EventTemplate(tid, " ".join(self._tokens[tid]), self._levels[tid])

    def parse(self, entry: LogEntry) -> tuple[int, list[str]]:
        raw = tokenize(entry.message)
        masked = [WILDCARD if is_variable(t) else t for t in raw]
        key = (len(masked), masked[0])
        leaf = self._leaves.setdefault(key, [])

        best_id, best_sim = None, -1.0
        for tid in leaf:
            toks = self._tokens[tid]
            same = sum(1 for a, b in zip(toks, masked) if a != WILDCARD and a == b)
            sim = same / len(masked)
            if sim > best_sim:
                best_id, best_sim = tid, sim

        if best_id is not None and best_sim >= self.threshold:
            tid = best_id
            toks = self._tokens[tid]
            self._tokens[tid] = [a if a == b else WILDCARD for a, b in zip(toks, masked)]
            if LOG_LEVELS.index(entry.level) > LOG_LEVELS.index(self._levels[tid]):
                self._levels[tid] = entry.level
        else:
            tid = len(self._tokens)
            self._tokens[tid] = masked
            self._levels[tid] = entry.level
            leaf.append(tid)

        params = [r for r, t in zip(raw, self._tokens[tid]) if t == WILDCARD]
        return tid, params

    def reconstruct(self, tid: int, params: Sequence[str]) -> str:
        return self.template(tid).fill(params)

    def to_json(self) -> list[dict]:
        return [{"id": t.template_id, "pattern": t.pattern} for t in self.templates.values()]


def parse_log(entry: LogEntry, state: LogParser) -> tuple[int, list[str]]:
    return state.parse(entry)


def parse_sequence(logs: LogSequence | Iterable[LogEntry], state: LogParser) -> list[tuple[int, list[str]]]:
    return [state.parse(e) for e in logs]


# -- sequence compression ---------------------------------------------------


@dataclass(frozen=True)
class Run:
    template_id: int
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ValidationError("must be >= 1", field="run.count")


@dataclass(frozen=True)
class RunSequence:
    runs: tuple[Run, ...] = ()

    def __post_init__(self):
        runs = tuple(self.runs)
        for a, b in zip(runs, runs[1:]):
            if a.template_id == b.template_id:
                raise ValidationError("adjacent runs share a template", field="runs")
        object.__setattr__(self, "runs", runs)

    def __len__(self):
        return len(self.runs)

    def __iter__(self):
        return iter(self.runs)

    @property
    def total(self) -> int:
        return sum(r.count for r in self.runs)

    def to_json(self) -> list[list[int]]:
        return [[r.template_id, r.count] for r in self.runs]


def compress_sequence(templates: Sequence[int]) -> RunSequence:
    runs: list[Run] = []
    for tid in templates:
        if runs and runs[-1].template_id == tid:
            runs[-1] = Run(tid, runs[-1].count + 1)
        else:
            runs.append(Run(tid, 1))
    return RunSequence(tuple(runs))


def expand_runs(runs: RunSequence) -> list[int]:
    out: list[int] = []
    for r in runs:
        out.extend([r.template_id] * r.count)
    return out


# -- semantic compression ---------------------------------------------------


@dataclass(frozen=True)
class OperationalSummary:
    elements: tuple[str, ...]
    source_count: int
    degraded: bool = False

    def __post_init__(self):
        elements = tuple(self.elements)
        if len(elements) > max(1, self.source_count):
            raise ValidationError("more elements than source entries", field="summary.elements")
        if any(not e for e in elements):
            raise ValidationError("elements must be non-empty", field="summary.elements")
        object.__setattr__(self, "elements", elements)


SUMMARY_SYSTEM_PROMPT = (
    "<<stage:summarize-logs>>\n"
    "You compress database logs into the key operations the node is performing. "
    "Reply with one operational element per line, most important first, at most {budget} lines. "
    "Mention the event templates you rely on."
)


def _template_totals(runs: RunSequence) -> list[tuple[int, int, int]]:
    """(template_id, total count, run count) ordered by first appearance."""
    totals: dict[int, list[int]] = {}
    for r in runs:
        t = totals.setdefault(r.template_id, [0, 0])
        t[0] += r.count
        t[1] += 1
    return [(tid, c, k) for tid, (c, k) in totals.items()]


def summary_prompt(runs: RunSequence, templates: dict[int, EventTemplate], budget: int) -> ChatRequest:
    lines = [f"{runs.total} log entries compressed into {len(runs)} runs of {len(set(r.template_id for r in runs))} templates:"]
    for tid, count, nruns in _template_totals(runs):
        t = templates[tid]
        lines.append(f"- [{t.level}] {t.pattern} | count={count} runs={nruns}")
    return ChatRequest(
        system_prompt=SUMMARY_SYSTEM_PROMPT.format(budget=budget),
        messages=(Message("user", "\n".join(lines)),),
        max_tokens=256,
    )


def deterministic_summary(runs: RunSequence, templates: dict[int, EventTemplate], budget: int) -> list[str]:
    ranked = sorted(enumerate(_template_totals(runs)), key=lambda x: (-x[1][1], x[0]))
    out = []
    for _, (tid, count, nruns) in ranked[:budget]:
        t = templates[tid]
        out.append(f"{t.pattern} [{t.level}] x{count} in {nruns} run{'s' if nruns != 1 else ''}")
    return out


_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")


def _grounded(line: str, constants: set[str]) -> bool:
    low = line.lower()
    return any(c in low for c in constants)


def summarize_operations(
    runs: RunSequence,
    templates: dict[int, EventTemplate],
    llm=None,
    budget: int = 5,
) -> OperationalSummary:
    """Reduce a run sequence to at most ``budget`` operational elements.

    Model lines that mention no constant token from the input templates are
    discarded; if nothing usable is left the deterministic ranking is used.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    n = runs.total
    if n == 0:
        return OperationalSummary((NO_ACTIVITY,), 0)
    if llm is None:
        return OperationalSummary(tuple(deterministic_summary(runs, templates, budget)), n)

    request = summary_prompt(runs, templates, budget)
    try:
        response = llm.chat(request)
    except GatewayError as exc:
        raise SummarizationError(f"log summarization failed: {exc}", prompt=request.flat_prompt()) from exc

    constants = {
        c.lower()
        for tid, _, _ in _template_totals(runs)
        for c in templates[tid].constants
        if len(c) >= 3 and any(ch.isalpha() for ch in c)
    }
    lines = []
    for raw in (response.text or "").splitlines():
        line = _BULLET.sub("", raw).strip()
        if line and _grounded(line, constants):
            lines.append(line)
    if not lines:
        return OperationalSummary(tuple(deterministic_summary(runs, templates, budget)), n, degraded=True)
    return OperationalSummary(tuple(lines[: min(budget, max(1, n))]), n)


def export_templates(parser: LogParser, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(parser.to_json(), fh, indent=2)
        fh.write("\n")
