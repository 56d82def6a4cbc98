import json
import subprocess
import sys

import pytest

from agentfm.cli import main


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "d"
    assert run("simulate", "--per-type", 2, "--normals", 10, "--seed", 7, "--out", data) == 0
    assert run("mock-script", "--truth", data / "truth.json", "--out", root / "script.json") == 0
    assert run("store", "build", "--dataset", data, "--out", root / "store.jsonl", "--prefix", "h-") == 0
    assert run("run", "--dataset", data, "--llm", "mock", "--script", root / "script.json", "--store", root / "store.jsonl", "--out", root / "reports") == 0
    assert run("eval", "--reports", root / "reports", "--truth", data / "truth.json", "--out", root / "metrics.json") == 0
    return root


def test_pipeline_smoke(pipeline):
    metrics = json.loads((pipeline / "metrics.json").read_text())
    assert set(metrics) == {"windows", "detection", "diagnosis", "degraded_verdicts", "stage_errors"}
    assert metrics["windows"] == 30
    assert metrics["detection"]["f1"] == 1.0
    assert metrics["diagnosis"]["macro"]["f1"] == 1.0
    assert len(list((pipeline / "reports").glob("*.json"))) == 30


def test_run_without_script_is_degraded_not_fatal(pipeline, tmp_path):
    assert run("run", "--dataset", pipeline / "d", "--out", tmp_path / "r") == 0
    docs = [json.loads(p.read_text()) for p in (tmp_path / "r").glob("*.json")]
    assert docs and all(d["verdict"]["degraded"] for d in docs)


def test_jobs_flag_same_output(pipeline, tmp_path):
    argv = ["run", "--dataset", pipeline / "d", "--script", pipeline / "script.json", "--store", pipeline / "store.jsonl"]
    assert run("--jobs", 4, *argv, "--out", tmp_path / "r") == 0
    reports = sorted((pipeline / "reports").glob("*.json"))
    assert len(reports) == 30
    for p in reports:
        assert (tmp_path / "r" / p.name).read_bytes() == p.read_bytes()


def test_http_without_endpoint(pipeline, monkeypatch, capsys):
    monkeypatch.delenv("AGENTFM_LLM_ENDPOINT", raising=False)
    assert run("run", "--dataset", pipeline / "d", "--llm", "http", "--out", pipeline / "never") == 1
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "config-error"
    assert not (pipeline / "never").exists()


def test_missing_dataset(tmp_path, capsys):
    assert run("table2", "--dataset", tmp_path / "nope") == 1
    assert "error" in json.loads(capsys.readouterr().err)


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        run("frobnicate")
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        run()
    assert exc.value.code == 2


def test_roles(pipeline, capsys):
    d = pipeline / "d"
    assert run("roles", "--config", d / "cluster.json") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["epoch"] == 0
    assert doc["leader"] == "n6"
    assert [r["node"] for r in doc["roles"] if r["leadership"] == "leader"] == ["n6"]
    state = d / "windows" / "w0000" / "state.json"
    assert run("roles", "--config", d / "cluster.json", "--state", state) == 0
    assert json.loads(capsys.readouterr().out)["epoch"] == 0


def test_parse_logs(pipeline, tmp_path, capsys):
    bundle = pipeline / "d" / "windows" / "w0000" / "n3.jsonl"
    assert run("parse-logs", bundle, "--out", tmp_path / "t.json", "--runs", tmp_path / "r.json") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["node"] == "n3"
    assert json.loads((tmp_path / "t.json").read_text()) == doc["templates"]
    runs = json.loads((tmp_path / "r.json").read_text())
    n_logs = sum(json.loads(line)["kind"] == "log" for line in open(bundle))
    assert n_logs and sum(c for _, c in runs) == n_logs


def test_describe_metrics(pipeline, capsys):
    bundle = pipeline / "d" / "windows" / "w0000" / "n3.jsonl"
    assert run("describe-metrics", bundle, "--denoise") == 0
    doc = json.loads(capsys.readouterr().out)
    assert "cpu_usage" in json.dumps(doc)


def test_table2_cli(pipeline, capsys):
    out = pipeline / "t2.json"
    assert run("table2", "--dataset", pipeline / "d", "--out", out) == 0
    doc = json.loads(out.read_text())
    assert set(doc["f1"]) == {"metrics", "logs"} and doc["windows"] == 20


def test_simulate_is_idempotent(tmp_path):
    for _ in range(2):
        assert run("simulate", "--per-type", 1, "--normals", 1, "--out", tmp_path / "d") == 0
    assert len(list((tmp_path / "d" / "windows").iterdir())) == 11


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "agentfm", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "simulate" in out.stdout
