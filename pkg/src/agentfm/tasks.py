"""Task agents: detection, diagnosis and mitigation, run strictly in that
order. Each one assembles a retrieval-augmented, reason-then-call-the-tool
prompt and validates the structured reply."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Optional, Sequence

from .errors import AgentFMError, GatewayError, GatingError, ProtocolError, RetrievalError
from .labels import DIAGNOSIS_LABELS, FAULT_LABELS, NORMAL, UNKNOWN
from .llm import (
    ChatRequest,
    Message,
    PromptBlock,
    ToolParam,
    ToolSchema,
    ask_yes_no,
    assemble_prompt,
)
from .rag import DEFAULT_K, ExampleStore, LabeledExample, featurize
from .telemetry import Window

CONTEXT_BUDGET_TOKENS = 6000


@lru_cache(maxsize=None)
def load_prompt(name: str) -> str:
    text = resources.files("agentfm").joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")
    return "\n".join(ln for ln in text.splitlines() if not ln.startswith("# ")).strip()


def prompt_version(name: str) -> str:
    text = resources.files("agentfm").joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")
    for ln in text.splitlines():
        if ln.startswith("# version:"):
            return ln.split(":", 1)[1].strip()
    return "0"


def query_marker(window: Window) -> str:
    """The one line that identifies the window under analysis in a prompt."""
    return f"Query window: {window}"


VERDICT_TOOL = ToolSchema(
    "report_verdict",
    "Report whether the current window is anomalous.",
    (ToolParam("answer", "enum", "yes if anomalous, no if normal", enum=("yes", "no")),),
)
DIAGNOSIS_TOOL = ToolSchema(
    "report_diagnosis",
    "Report the failure type and the suspect nodes.",
    (
        ToolParam("label", "enum", "failure type", enum=DIAGNOSIS_LABELS),
        ToolParam("suspect_nodes", "string_list", "ids of the nodes at fault"),
        ToolParam("rationale", "string", "short explanation", required=False),
    ),
)
MITIGATION_TOOL = ToolSchema(
    "propose_mitigation",
    "Propose remediation actions.",
    (
        ToolParam(
            "actions",
            "object_list",
            "remediation actions, most important first",
            fields=(
                ToolParam("title", "string"),
                ToolParam("detail", "string"),
                ToolParam("targets", "string_list", required=False),
            ),
        ),
        ToolParam("rationale", "string", required=False),
    ),
)


@dataclass(frozen=True)
class Verdict:
    window: Window
    anomalous: bool
    rationale: str
    degraded: bool = False

    def __post_init__(self):
        if self.anomalous and not self.rationale:
            raise ValueError("an anomalous verdict needs a rationale")

    def to_json(self) -> dict:
        return {"anomalous": self.anomalous, "rationale": self.rationale, "degraded": self.degraded}


@dataclass(frozen=True)
class Diagnosis:
    window: Window
    label: str
    suspect_nodes: tuple[str, ...]
    rationale: str

    def __post_init__(self):
        if self.label not in DIAGNOSIS_LABELS:
            raise ProtocolError(f"label {self.label!r} outside the closed set")
        object.__setattr__(self, "suspect_nodes", tuple(self.suspect_nodes))

    def to_json(self) -> dict:
        return {"label": self.label, "suspect_nodes": list(self.suspect_nodes), "rationale": self.rationale}


@dataclass(frozen=True)
class Action:
    title: str
    detail: str
    target_nodes: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.title.strip() or not self.detail.strip():
            raise ProtocolError("mitigation actions need a non-empty title and detail")
        object.__setattr__(self, "target_nodes", tuple(self.target_nodes))


@dataclass(frozen=True)
class MitigationPlan:
    window: Window
    actions: tuple[Action, ...]
    rationale: str = ""

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        if not self.actions:
            raise ProtocolError("a mitigation plan needs at least one action")

    def to_json(self) -> dict:
        return {
            "actions": [{"title": a.title, "detail": a.detail, "targets": list(a.target_nodes)} for a in self.actions],
            "rationale": self.rationale,
        }


# -- prompt assembly ----------------------------------------------------------


def _example_block(i: int, ex: LabeledExample) -> PromptBlock:
    return PromptBlock(f"example:{ex.id}", f"### Example {i} (label: {ex.label})\n{ex.digest_text}")


def detection_examples(store: Optional[ExampleStore], features, k: int = DEFAULT_K) -> list[LabeledExample]:
    """Top matches split evenly between normal and abnormal when both exist."""
    if store is None or not len(store):
        return []
    abnormal = set(FAULT_LABELS)
    normals = _safe_retrieve(store, features, k, {NORMAL})
    faults = _safe_retrieve(store, features, k, abnormal)
    half = k // 2
    take_n = min(len(normals), max(half, k - len(faults)))
    take_f = min(len(faults), k - take_n)
    return normals[:take_n] + faults[:take_f]


def _safe_retrieve(store, features, k, labels):
    try:
        return store.retrieve(features, k, labels)
    except RetrievalError:
        return []


def build_user_prompt(instructions: Sequence[str], examples: Sequence[LabeledExample], query_text: str, window: Window, budget: int) -> tuple[str, list[str]]:
    blocks = [PromptBlock("instructions", t, droppable=False) for t in instructions if t]
    if examples:
        blocks.append(PromptBlock("examples-header", "## Reference examples", droppable=False))
        blocks += [_example_block(i + 1, ex) for i, ex in enumerate(examples)]
    blocks.append(PromptBlock("query", f"## Current window\n{query_marker(window)}\n{query_text}", droppable=False))
    return assemble_prompt(blocks, budget)


def detection_prompt(digest, store: Optional[ExampleStore], k: int = DEFAULT_K, budget: int = CONTEXT_BUDGET_TOKENS) -> str:
    examples = detection_examples(store, featurize(digest), k)
    text, _ = build_user_prompt([], examples, digest.text, digest.window, budget)
    return text


# -- agents -------------------------------------------------------------------


def fallback_anomalous(digest) -> tuple[bool, str]:
    flagged = [d for d in digest.per_node if d.node_flags["metric_anomaly"] or d.node_flags["error_logs"]]
    if not flagged:
        return False, "model unavailable; no node-level metric anomaly points or error-log runs"
    parts = []
    for d in flagged:
        why = [k for k in ("metric_anomaly", "error_logs") if d.node_flags[k]]
        parts.append(f"{d.node_id} ({', '.join(why)})")
    return True, "model unavailable; fallback rule flagged " + "; ".join(parts)


def detect(digest, store: Optional[ExampleStore], llm, *, k: int = DEFAULT_K, budget: int = CONTEXT_BUDGET_TOKENS) -> Verdict:
    prompt = detection_prompt(digest, store, k, budget)
    system = load_prompt("detection")
    question = "Is the current window anomalous? Call report_verdict."
    try:
        anomalous = ask_yes_no(question, prompt, llm, system_prompt=system, tool=VERDICT_TOOL)
    except (GatewayError, ProtocolError) as exc:
        anomalous, why = fallback_anomalous(digest)
        return Verdict(digest.window, anomalous, f"{why} [{exc.kind}: {exc}]", degraded=True)

    rationale = ""
    follow_up = ChatRequest(
        system_prompt=load_prompt("detection_rationale"),
        messages=(
            Message("user", f"{prompt}\n\n{question}"),
            Message("assistant", f"report_verdict(answer={'yes' if anomalous else 'no'})"),
            Message("user", "Explain the evidence for your answer."),
        ),
    )
    try:
        rationale = (llm.chat(follow_up).text or "").strip()
    except AgentFMError:
        rationale = ""
    if not rationale:
        rationale = "anomalous per model verdict" if anomalous else "normal per model verdict"
    return Verdict(digest.window, anomalous, rationale)


def diagnosis_prompt(digest, store: Optional[ExampleStore], k: int = DEFAULT_K, budget: int = CONTEXT_BUDGET_TOKENS) -> str:
    examples = []
    if store is not None and len(store):
        examples = _safe_retrieve(store, featurize(digest), k, set(FAULT_LABELS))
    text, _ = build_user_prompt([], examples, digest.text, digest.window, budget)
    return text


def diagnose(digest, verdict: Verdict, store: Optional[ExampleStore], llm, *, k: int = DEFAULT_K, budget: int = CONTEXT_BUDGET_TOKENS) -> Diagnosis:
    if not verdict.anomalous:
        raise GatingError("diagnosis runs only on windows detected as anomalous")
    system = load_prompt("diagnosis").format(labels=", ".join(DIAGNOSIS_LABELS))
    request = ChatRequest(
        system_prompt=system,
        messages=(Message("user", diagnosis_prompt(digest, store, k, budget) + "\n\nDiagnose the failure. Call report_diagnosis."),),
        tools=(DIAGNOSIS_TOOL,),
    )
    response = llm.chat(request)
    call = response.tool_call
    if call is None or call.name != DIAGNOSIS_TOOL.name:
        raise ProtocolError("expected a report_diagnosis tool call")
    members = {d.node_id for d in digest.per_node}
    suspects = []
    for n in call.arguments["suspect_nodes"]:
        if n in members and n not in suspects:
            suspects.append(n)
    rationale = call.arguments.get("rationale") or response.text or ""
    return Diagnosis(digest.window, call.arguments["label"], tuple(suspects), rationale)


def mitigation_prompt(diagnosis: Diagnosis, digest=None) -> str:
    lines = [
        "## Diagnosis",
        query_marker(diagnosis.window),
        f"Failure type: {diagnosis.label}",
        f"Suspect nodes: {', '.join(diagnosis.suspect_nodes) or 'none identified'}",
        f"Diagnosis rationale: {diagnosis.rationale or 'n/a'}",
    ]
    if digest is not None:
        roles = [f"{d.node_id}: {d.role.kind}/{d.role.leadership}" for d in digest.per_node if d.node_id in diagnosis.suspect_nodes]
        if roles:
            lines.append("Suspect roles: " + "; ".join(roles))
    return "\n".join(lines)


def mitigate(diagnosis: Diagnosis, llm, *, allow_unknown: bool = False, digest=None) -> MitigationPlan:
    if diagnosis.label == UNKNOWN and not allow_unknown:
        raise GatingError("mitigation needs a known failure type")
    request = ChatRequest(
        system_prompt=load_prompt("mitigation"),
        messages=(Message("user", mitigation_prompt(diagnosis, digest) + "\n\nPropose mitigations. Call propose_mitigation."),),
        tools=(MITIGATION_TOOL,),
    )
    response = llm.chat(request)
    call = response.tool_call
    if call is None or call.name != MITIGATION_TOOL.name:
        raise ProtocolError("expected a propose_mitigation tool call")
    actions = tuple(
        Action(a["title"], a["detail"], tuple(a.get("targets", ()))) for a in call.arguments["actions"]
    )
    return MitigationPlan(diagnosis.window, actions, call.arguments.get("rationale") or response.text or "")
