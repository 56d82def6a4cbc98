import pytest

from agentfm import simulator
from agentfm.errors import GatingError, ProtocolError
from agentfm.labels import DIAGNOSIS_LABELS, FAULT_LABELS
from agentfm.llm import ChatResponse, MockProvider, ToolCall
from agentfm.meta import build_cluster_digest
from agentfm.rag import ExampleStore, LabeledExample, featurize
from agentfm.tasks import (
    DIAGNOSIS_TOOL,
    Diagnosis,
    Verdict,
    detect,
    detection_examples,
    detection_prompt,
    diagnose,
    load_prompt,
    mitigate,
    prompt_version,
    query_marker,
)
from agentfm.telemetry import Window


def call(name, **args):
    return ChatResponse(tool_call=ToolCall(name, args))


@pytest.fixture(scope="module")
def quiet(baseline, table):
    return build_cluster_digest(baseline, table)


@pytest.fixture(scope="module")
def spiky(spec, table, window):
    bundles = simulator.generate_baseline(spec, window, index=0)
    fault = simulator.FaultSpec("cpu_saturation", ("n4",), Window(55, 58), intensity=1.0)
    bundles, _ = simulator.inject_fault(bundles, fault)
    return build_cluster_digest(bundles, table)


def test_prompts_load_with_stage_markers():
    assert load_prompt("detection").startswith("<<stage:detect>>")
    assert load_prompt("diagnosis").startswith("<<stage:diagnose>>")
    assert "{labels}" in load_prompt("diagnosis")
    assert prompt_version("mitigation") == "1"
    assert not any(ln.startswith("# ") for ln in load_prompt("detection").splitlines())


def test_yes_on_anomaly_points(spiky):
    assert "z-score ≥ 3" in spiky.text
    mock = MockProvider()
    mock.script_response("z-score ≥ 3", call("report_verdict", answer="yes"))
    v = detect(spiky, None, mock)
    assert v.anomalous and not v.degraded and v.rationale


def test_quiet_window_no(quiet):
    mock = MockProvider()
    mock.script_response("<<stage:detect>>", call("report_verdict", answer="no"))
    v = detect(quiet, None, mock)
    assert not v.anomalous and not v.degraded


def test_rationale_comes_from_follow_up(quiet):
    mock = MockProvider()
    mock.script_response("<<stage:detect>>", call("report_verdict", answer="yes"))
    mock.script_response("<<stage:detect-rationale>>", ChatResponse(text="n6 shows a cpu spike"))
    v = detect(quiet, None, mock)
    assert v.rationale == "n6 shows a cpu spike"
    assert len(mock.calls) == 2
    assert "report_verdict(answer=yes)" in mock.calls[1].flat_prompt()


def test_gateway_down_falls_back(spiky):
    mock = MockProvider()
    mock.fail_on("<<stage:detect>>")
    v = detect(spiky, None, mock)
    assert v.degraded and v.anomalous
    assert "n4" in v.rationale


def test_gateway_down_on_quiet_node_flags(quiet):
    mock = MockProvider()
    mock.fail_on("<<stage:detect>>")
    v = detect(quiet, None, mock)
    assert v.degraded
    assert v.anomalous == any(d.flagged for d in quiet.per_node)


def _store(quiet, spiky):
    fq, fs = featurize(quiet), featurize(spiky)
    exs = [LabeledExample(f"n{i}", f"normal text {i}", fq + i * 0.01, "normal") for i in range(3)]
    exs += [LabeledExample(f"f{i}", f"fault text {i}", fs + i * 0.01, "cpu_saturation") for i in range(3)]
    return ExampleStore(exs)


def test_detection_examples_balanced(quiet, spiky):
    store = _store(quiet, spiky)
    picked = detection_examples(store, featurize(quiet), 4)
    assert sorted(e.label for e in picked) == ["cpu_saturation", "cpu_saturation", "normal", "normal"]


def test_detection_examples_fill_from_one_side(quiet, spiky):
    store = ExampleStore([e for e in _store(quiet, spiky) if e.label == "normal"])
    assert len(detection_examples(store, featurize(quiet), 4)) == 3


def test_detection_prompt_deterministic(quiet, spiky):
    store = _store(quiet, spiky)
    a = detection_prompt(quiet, store)
    b = detection_prompt(quiet, store)
    assert a == b
    assert query_marker(quiet.window) in a
    assert a.count("Query window:") == 1


def test_diagnose(spiky):
    mock = MockProvider(call("report_diagnosis", label="cpu_saturation", suspect_nodes=["n1"], rationale="hot"))
    verdict = Verdict(spiky.window, True, "spike")
    d = diagnose(spiky, verdict, None, mock)
    assert (d.label, d.suspect_nodes) == ("cpu_saturation", ("n1",))
    sent = mock.calls[0]
    assert [t.name for t in sent.tools] == ["report_diagnosis"]
    for label in FAULT_LABELS:
        assert label in sent.system_prompt


def test_diagnose_is_gated(quiet):
    with pytest.raises(GatingError):
        diagnose(quiet, Verdict(quiet.window, False, ""), None, MockProvider())


def test_diagnose_filters_unknown_nodes(spiky):
    mock = MockProvider(call("report_diagnosis", label="io_saturation", suspect_nodes=["n99"], rationale="kept"))
    d = diagnose(spiky, Verdict(spiky.window, True, "x"), None, mock)
    assert d.suspect_nodes == () and d.rationale == "kept"


def test_diagnose_rejects_free_label(spiky):
    mock = MockProvider(call("report_diagnosis", label="disk_melt", suspect_nodes=[]))
    with pytest.raises(ProtocolError):
        diagnose(spiky, Verdict(spiky.window, True, "x"), None, mock)


def test_diagnose_uses_only_abnormal_examples(quiet, spiky):
    store = _store(quiet, spiky)
    mock = MockProvider(call("report_diagnosis", label="cpu_saturation", suspect_nodes=[]))
    diagnose(spiky, Verdict(spiky.window, True, "x"), store, mock)
    prompt = mock.calls[0].flat_prompt()
    assert "fault text" in prompt and "normal text" not in prompt


def test_label_enum_is_closed():
    (label,) = [p for p in DIAGNOSIS_TOOL.params if p.name == "label"]
    assert label.enum == DIAGNOSIS_LABELS and len(DIAGNOSIS_LABELS) == 11


def _diag(label="cpu_saturation"):
    return Diagnosis(Window(0, 60), label, ("n1",), "cpu pegged")


def test_mitigate_two_actions():
    mock = MockProvider(
        call(
            "propose_mitigation",
            actions=[
                {"title": "Increase CPU Resources", "detail": "Add cores to n1", "targets": ["n1"]},
                {"title": "Load Balancing", "detail": "Move regions off n1"},
            ],
        )
    )
    plan = mitigate(_diag(), mock)
    assert [a.title for a in plan.actions] == ["Increase CPU Resources", "Load Balancing"]
    assert plan.actions[0].target_nodes == ("n1",)
    assert query_marker(Window(0, 60)) in mock.calls[0].flat_prompt()


def test_mitigate_unknown_needs_flag():
    mock = MockProvider(call("propose_mitigation", actions=[{"title": "Look", "detail": "closer"}]))
    with pytest.raises(GatingError):
        mitigate(_diag("unknown"), mock)
    assert mitigate(_diag("unknown"), mock, allow_unknown=True).actions


@pytest.mark.parametrize(
    "actions",
    [[], [{"title": "", "detail": "x"}], [{"title": "t", "detail": "  "}]],
)
def test_mitigate_structural_errors(actions):
    with pytest.raises(ProtocolError):
        mitigate(_diag(), MockProvider(call("propose_mitigation", actions=actions)))


def test_verdict_invariant():
    with pytest.raises(ValueError):
        Verdict(Window(0, 1), True, "")
