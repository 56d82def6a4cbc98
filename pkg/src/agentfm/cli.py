"""Command-line entry point: ``agentfm <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import evaluation, simulator
from .errors import AgentFMError, ConfigError
from .llm import make_gateway
from .logs import LogParser, compress_sequence, summarize_operations
from .meta import build_cluster_digest, run_pipeline, write_report
from .metrics import describe_metrics, preprocess
from .rag import ExampleStore, LabeledExample, featurize
from .roles import RoleManager, SystemState, bootstrap_roles, load_cluster_config, refresh_roles
from .telemetry import load_bundle

log = logging.getLogger("agentfm")


def _print_json(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _window_tables(dataset: simulator.Dataset):
    """Role table per window, refreshed in window order from each state.json."""
    manager = RoleManager.from_config(dataset.cluster_config)
    out = []
    for w in dataset:
        out.append((w, manager.observe(w.state())))
    return out


# -- commands --------------------------------------------------------------------


def cmd_simulate(args) -> int:
    spec = simulator.default_cluster(args.nodes, seed=args.seed)
    _, truth = simulator.generate_campaign(
        spec,
        args.per_type,
        args.normals,
        args.out,
        window_length=args.window,
        intensity=args.intensity,
        kill_leader_at=args.kill_leader_at,
    )
    faults = sum(v is not None for v in truth.values())
    _print_json({"out": str(args.out), "windows": len(truth), "faults": faults, "normals": len(truth) - faults})
    return 0


def cmd_store_build(args) -> int:
    dataset = simulator.Dataset(args.dataset)
    truth = dataset.truth

    def example(item):
        w, table = item
        digest = build_cluster_digest(w.bundles(), table)
        t = truth.get(w.key)
        label = t[0] if t else "normal"
        return LabeledExample(f"{args.prefix}{w.key}", digest.text, featurize(digest), label)

    store = ExampleStore(_map(example, _window_tables(dataset), args.jobs))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    store.save(args.out)
    _print_json({"out": str(args.out), "examples": len(store)})
    return 0


def cmd_run(args) -> int:
    llm = make_gateway(args.llm, args.script)
    dataset = simulator.Dataset(args.dataset)
    store = ExampleStore.load(args.store) if args.store else None
    out = Path(args.out)

    def one(item):
        w, table = item
        digest = build_cluster_digest(w.bundles(), table, llm, rewrite_metrics=args.rewrite_metrics)
        report = run_pipeline(digest, table, store, llm, k=args.k)
        write_report(report, out)
        return report

    reports = _map(one, _window_tables(dataset), args.jobs)
    _print_json(
        {
            "out": str(out),
            "reports": len(reports),
            "anomalous": sum(r.verdict.anomalous for r in reports),
            "errors": sum(r.error is not None for r in reports),
        }
    )
    return 0


def cmd_eval(args) -> int:
    truth = simulator.load_truth(args.truth)
    result = evaluation.evaluate_reports(args.reports, truth)
    evaluation.dump_json(result, args.out)
    _print_json({"out": str(args.out), "detection_f1": result["detection"]["f1"], "diagnosis_macro_f1": result["diagnosis"]["macro"]["f1"]})
    return 0


def cmd_table2(args) -> int:
    dataset = simulator.Dataset(args.dataset)
    result = evaluation.table2_experiment(evaluation.dataset_fault_windows(dataset))
    evaluation.dump_json(result.to_json(), args.out)
    _print_json(result.to_json()["identifiable"])
    return 0


def cmd_mock_script(args) -> int:
    truth = simulator.load_truth(args.truth)
    script = evaluation.oracle_mock_script(truth, window_length=args.window, flip_rate=args.flip_rate, seed=args.seed)
    evaluation.dump_json(script, args.out)
    _print_json({"out": str(args.out), "rules": len(script["rules"]), "flipped": len(script["flipped"])})
    return 0


def cmd_parse_logs(args) -> int:
    bundle = load_bundle(args.input)
    parser = LogParser()
    ids = [parser.parse(e)[0] for e in bundle.logs]
    runs = compress_sequence(ids)
    summary = summarize_operations(runs, parser.templates)
    doc = {"node": bundle.node_id, "templates": parser.to_json(), "runs": runs.to_json(), "summary": list(summary.elements)}
    if args.out:
        evaluation.dump_json(doc["templates"], args.out)
    if args.runs:
        evaluation.dump_json(doc["runs"], args.runs)
    _print_json(doc)
    return 0


def cmd_describe_metrics(args) -> int:
    bundle = load_bundle(args.input)
    if bundle.window is None:
        raise ConfigError(f"{args.input} holds an empty bundle")
    llm = make_gateway(args.llm, args.script) if args.llm else None
    pre = preprocess(bundle.metrics, denoise=bool(args.denoise))
    _print_json(describe_metrics(pre, bundle.window, llm).to_json())
    return 0


def cmd_roles(args) -> int:
    table = bootstrap_roles(load_cluster_config(args.config))
    if args.state:
        with open(args.state, encoding="utf-8") as fh:
            table = refresh_roles(table, SystemState.from_json(json.load(fh)))
    _print_json(table.to_json())
    return 0


# -- parser ----------------------------------------------------------------------


def _globals(suppress: bool) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(42), help="random seed (default 42)")
    p.add_argument("--jobs", type=int, default=d(1), help="parallel windows (default 1)")
    p.add_argument("--log-level", default=d("WARNING"), choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _globals(suppress=True)
    parser = argparse.ArgumentParser(prog="agentfm", description="Role-aware multi-agent failure management toolkit.", parents=[_globals(False)])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("simulate", parents=[common], help="generate a labeled fault campaign")
    p.add_argument("--nodes", type=int, default=6)
    p.add_argument("--per-type", type=int, default=20)
    p.add_argument("--normals", type=int, default=100)
    p.add_argument("--window", type=float, default=simulator.DEFAULT_WINDOW)
    p.add_argument("--intensity", type=float, default=simulator.DEFAULT_INTENSITY)
    p.add_argument("--kill-leader-at", type=int, default=None, metavar="INDEX")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("store", parents=[common], help="manage the labeled example store")
    store_sub = p.add_subparsers(dest="store_command", required=True, metavar="action")
    b = store_sub.add_parser("build", parents=[common], help="build a store from a dataset")
    b.add_argument("--dataset", type=Path, required=True)
    b.add_argument("--out", type=Path, required=True)
    b.add_argument("--prefix", default="", help="prefix for example ids")
    b.set_defaults(fn=cmd_store_build)

    p = sub.add_parser("run", parents=[common], help="run detection, diagnosis and mitigation per window")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--llm", choices=["mock", "http"], default="mock")
    p.add_argument("--script", type=Path, help="mock script (JSON)")
    p.add_argument("--store", type=Path, help="example store (JSONL)")
    p.add_argument("--k", type=int, default=4, help="retrieved examples per prompt")
    p.add_argument("--rewrite-metrics", action="store_true", help="let the model rewrite metric descriptions")
    p.add_argument("--out", type=Path, default=Path("reports"))
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("eval", parents=[common], help="score reports against ground truth")
    p.add_argument("--reports", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--out", type=Path, default=Path("metrics.json"))
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("table2", parents=[common], help="metrics vs logs DTW identifiability")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--out", type=Path, default=Path("table2.json"))
    p.set_defaults(fn=cmd_table2)

    p = sub.add_parser("mock-script", parents=[common], help="write an oracle mock script from ground truth")
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--flip-rate", type=float, default=0.0)
    p.add_argument("--window", type=float, default=simulator.DEFAULT_WINDOW)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(fn=cmd_mock_script)

    p = sub.add_parser("parse-logs", parents=[common], help="mine templates from a bundle's logs")
    p.add_argument("input", type=Path, metavar="bundle")
    p.add_argument("--out", type=Path, help="template table (JSON)")
    p.add_argument("--runs", type=Path, help="run-length sequence (JSON)")
    p.set_defaults(fn=cmd_parse_logs)

    p = sub.add_parser("describe-metrics", parents=[common], help="describe a bundle's metrics")
    p.add_argument("input", type=Path, metavar="bundle")
    p.add_argument("--llm", choices=["mock", "http"])
    p.add_argument("--script", type=Path)
    p.add_argument("--denoise", action="store_true")
    p.set_defaults(fn=cmd_describe_metrics)

    p = sub.add_parser("roles", parents=[common], help="print the role table")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--state", type=Path)
    p.set_defaults(fn=cmd_roles)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except AgentFMError as exc:
        sys.stderr.write(json.dumps({"error": exc.kind, "message": str(exc)}) + "\n")
        return 1
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": "io", "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
