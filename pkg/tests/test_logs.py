import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agentfm.errors import SummarizationError
from agentfm.llm import ChatResponse, MockProvider
from agentfm.logs import (
    NO_ACTIVITY,
    LogParser,
    Run,
    RunSequence,
    compress_sequence,
    expand_runs,
    parse_log,
    parse_sequence,
    summarize_operations,
)
from agentfm.simulator import MESSAGE_TEMPLATES, render_message
from agentfm.telemetry import LogEntry


def entry(msg, level="INFO"):
    return LogEntry(0.0, level, msg)


def test_ip_is_masked():
    p = LogParser()
    tid, params = parse_log(entry("Connection from 10.0.0.5 established"), p)
    assert p.template(tid).pattern == "Connection from <*> established"
    assert params == ["10.0.0.5"]


def test_identical_messages_share_template():
    p = LogParser()
    a, _ = parse_log(entry("Flush completed"), p)
    b, _ = parse_log(entry("Flush completed"), p)
    assert a == b and len(p) == 1


def test_numbers_merge_into_one_template():
    p = LogParser()
    parse_log(entry("wrote 4096 bytes"), p)
    parse_log(entry("wrote 128 bytes"), p)
    assert len(p) == 1
    assert p.templates[0].pattern == "wrote <*> bytes"


def test_differing_constants_generalize_above_threshold():
    p = LogParser()
    a, _ = parse_log(entry("heartbeat from n1 ok"), p)
    b, params = parse_log(entry("heartbeat from n2 ok"), p)
    assert a == b
    assert p.template(a).pattern == "heartbeat from <*> ok"
    assert p.reconstruct(b, params) == "heartbeat from n2 ok"


def test_below_threshold_creates_new_template():
    p = LogParser()
    a, _ = parse_log(entry("alpha beta gamma delta"), p)
    b, _ = parse_log(entry("alpha one two three"), p)
    assert a != b


def test_state_grows_by_at_most_one():
    p = LogParser()
    for msg in ["a b c", "a b d", "x", "a b c", "q r s t"]:
        before = len(p)
        parse_log(entry(msg), p)
        assert len(p) - before <= 1


def test_level_tracks_most_severe():
    p = LogParser()
    parse_sequence([entry("disk 3 slow", "INFO"), entry("disk 4 slow", "ERROR")], p)
    assert p.templates[0].level == "ERROR"


@pytest.mark.criterion(4, "property suites")
def test_simulator_templates_are_lossless():
    rng = np.random.default_rng(0)
    p = LogParser()
    for kind in MESSAGE_TEMPLATES:
        for _ in range(30):
            msg = render_message(kind, rng, f"n{rng.integers(1, 7)}")
            tid, params = parse_log(entry(msg), p)
            assert p.reconstruct(tid, params) == msg
    # one template per message kind; node ids generalize inside a kind
    assert len(p) == len(MESSAGE_TEMPLATES)


tokens = st.sampled_from(["write", "flush", "3", "10.0.0.1", "0x1f", "/data/a.ts", "ok", "", "<*>", "node", "42ms"])


@pytest.mark.criterion(4, "property suites")
@settings(max_examples=300)
@given(st.lists(st.lists(tokens, min_size=1, max_size=8).map(" ".join).filter(bool), min_size=1, max_size=20))
def test_parse_is_lossless(messages):
    p = LogParser()
    for msg in messages:
        tid, params = parse_log(entry(msg), p)
        assert p.reconstruct(tid, params) == msg


def test_compress_examples():
    A, B = 1, 2
    assert compress_sequence([A, A, A, B, B, A]).runs == (Run(A, 3), Run(B, 2), Run(A, 1))
    assert compress_sequence([]).runs == ()
    r = compress_sequence([A] * 1000)
    assert r.runs == (Run(A, 1000),) and len(r) == 1


def test_expand_examples():
    assert expand_runs(RunSequence((Run(1, 3), Run(2, 2), Run(1, 1)))) == [1, 1, 1, 2, 2, 1]
    assert expand_runs(RunSequence(())) == []
    assert expand_runs(RunSequence((Run(9, 1),))) == [9]


def test_run_sequence_invariants():
    with pytest.raises(ValueError):
        Run(1, 0)
    with pytest.raises(ValueError):
        RunSequence((Run(1, 1), Run(1, 2)))


@pytest.mark.criterion(4, "property suites")
@settings(max_examples=1000)
@given(st.lists(st.integers(0, 4), max_size=60))
def test_compression_roundtrip_and_conservation(ids):
    runs = compress_sequence(ids)
    assert expand_runs(runs) == ids
    assert runs.total == len(ids)
    assert all(a.template_id != b.template_id for a, b in zip(runs.runs, runs.runs[1:]))
    assert compress_sequence(expand_runs(runs)) == runs


def _runs_for(messages):
    p = LogParser()
    ids = [tid for tid, _ in parse_sequence([entry(m) for m in messages], p)]
    return compress_sequence(ids), p.templates


def test_summary_of_single_template_mentions_it():
    runs, templates = _runs_for(["Flush completed"] * 50)
    mock = MockProvider()
    mock.script_response("Flush completed", ChatResponse(text="Flush completed repeatedly (50 times)"))
    s = summarize_operations(runs, templates, mock, budget=5)
    assert len(s.elements) == 1 and "Flush" in s.elements[0]
    assert not s.degraded and s.source_count == 50


def test_empty_runs_summarize_to_no_activity():
    mock = MockProvider()
    s = summarize_operations(RunSequence(()), {}, mock)
    assert s.elements == (NO_ACTIVITY,)
    assert mock.calls == []


def test_budget_one_gives_one_element():
    runs, templates = _runs_for([f"event{i} happened" for i in range(10)])
    assert len(templates) == 10
    assert len(summarize_operations(runs, templates, None, budget=1).elements) == 1
    mock = MockProvider(ChatResponse(text="\n".join(f"- event{i} happened" for i in range(10))))
    assert len(summarize_operations(runs, templates, mock, budget=1).elements) == 1


def test_ungrounded_model_lines_are_dropped():
    runs, templates = _runs_for(["compaction task 3 finished", "compaction task 4 finished"])
    mock = MockProvider(ChatResponse(text="- The moon is bright\n- compaction ran twice"))
    s = summarize_operations(runs, templates, mock)
    assert s.elements == ("compaction ran twice",)


def test_nothing_grounded_falls_back():
    runs, templates = _runs_for(["compaction task 3 finished"])
    s = summarize_operations(runs, templates, MockProvider(ChatResponse(text="unrelated")))
    assert s.degraded and "compaction" in s.elements[0]


def test_transport_failure_carries_prompt():
    runs, templates = _runs_for(["Flush completed"])
    mock = MockProvider()
    mock.fail_on("Flush")
    with pytest.raises(SummarizationError) as exc:
        summarize_operations(runs, templates, mock)
    assert "Flush completed" in exc.value.prompt


@settings(max_examples=100)
@given(st.lists(st.integers(0, 5), min_size=1, max_size=200), st.integers(1, 8))
def test_summary_size_bounds(ids, budget):
    p = LogParser()
    msgs = [f"kind{i} step" for i in ids]
    ids = [tid for tid, _ in parse_sequence([entry(m) for m in msgs], p)]
    runs = compress_sequence(ids)
    s = summarize_operations(runs, p.templates, None, budget)
    assert 1 <= len(s.elements) <= budget
    if len(ids) >= 10 * len(p):
        assert len(s.elements) < s.source_count
