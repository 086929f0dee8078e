"""Command-line interface: run, eval, replay-verify.

Exit codes: 0 clean, 1 completed with degradations, 2 fatal or usage error.
"""

from __future__ import annotations

import argparse
import filecmp
import json
import sys
import tempfile
from pathlib import Path

from .artifacts import read_json
from .config import COUNT_FIELDS, build_config, load_config_file
from .errors import CassetteMiss, ConfigError, ParseError, PipelineError
from .metrics import evaluate_run
from .model import AnalysisGoal
from .orchestrator import build_gateway, run_analysis


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", required=True, help="path to the CSV dataset")
    parser.add_argument("--goal", required=True, help="analysis goal statement")
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--run-dir", help="directory for all run artifacts")
    parser.add_argument("--mode", choices=("live", "record", "replay"))
    parser.add_argument("--cassette", dest="cassette_path", help="cassette file path")
    parser.add_argument("--max-date", help="search date cap, YYYY-MM-DD")
    parser.add_argument("--transport", choices=("http", "scripted"))
    parser.add_argument("--executor", choices=("subprocess", "scripted"))
    for name in COUNT_FIELDS:
        parser.add_argument(f"--{name.replace('_', '-')}", type=int, dest=name)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="insightloop",
        description="Automated insight discovery over tabular datasets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the full analysis loop on a dataset")
    _add_run_options(run)

    ev = sub.add_parser("eval", help="score a finished run against a gold file")
    ev.add_argument("--run-dir", required=True)
    ev.add_argument("--gold", required=True, help="gold JSON: {insights: [...], summary: ...}")
    ev.add_argument("--out", help="where to write the metrics report JSON")
    ev.add_argument("--config", help="YAML config file")
    ev.add_argument("--mode", choices=("live", "record", "replay"))
    ev.add_argument("--cassette", dest="cassette_path")
    ev.add_argument("--transport", choices=("http", "scripted"))

    verify = sub.add_parser(
        "replay-verify", help="re-run a recorded run from its cassette and diff artifacts"
    )
    verify.add_argument("--run-dir", required=True)
    return parser


def _config_from_args(args: argparse.Namespace, defaults: dict | None = None) -> "object":
    file_doc = dict(defaults or {})
    if getattr(args, "config", None):
        file_doc.update(load_config_file(Path(args.config)))
    overrides = {
        name: getattr(args, name, None)
        for name in (
            "mode", "run_dir", "cassette_path", "max_date", "transport", "executor",
            *COUNT_FIELDS,
        )
    }
    return build_config(file_doc, **overrides)


def _cmd_run(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    report, status = run_analysis(Path(args.dataset), AnalysisGoal(args.goal), config)
    print(f"run complete: {len(report['history'])} insights, "
          f"{len(report['degraded'])} degradations, artifacts in {config.run_dir}")
    for flag in report["degraded"]:
        print(f"  degraded: {flag}", file=sys.stderr)
    return status


def _cmd_eval(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    defaults = {"transport": "scripted", "mode": "live"}
    config = _config_from_args(args, defaults)
    config.run_dir = run_dir
    gateway = build_gateway(config)
    out = Path(args.out) if args.out else run_dir / "metrics.json"
    doc = evaluate_run(run_dir, Path(args.gold), gateway, out_path=out)
    print(json.dumps(
        {
            "insight_level": doc["insight_level"]["value"],
            "summary_level": doc["summary_level"]["value"],
            "diversity": doc["diversity"],
            "coverage": doc["coverage"],
        },
        indent=2,
    ))
    print(f"metrics report written to {out}")
    return 0 if not doc["flags"] else 1


def _normalized_report(path: Path) -> dict:
    doc = read_json(path)
    doc["timings"] = None  # measurement metadata, not pipeline output
    doc["config"]["mode"] = None  # record vs replay is the one expected delta
    return doc


def _cmd_replay_verify(args: argparse.Namespace) -> int:
    original = Path(args.run_dir)
    report_path = original / "report.json"
    if not report_path.is_file():
        print(f"no report.json under {original}", file=sys.stderr)
        return 2
    cassette = original / "cassette.json"
    if not cassette.is_file():
        print(f"no cassette.json under {original}; nothing to replay", file=sys.stderr)
        return 2
    original_report = read_json(report_path)
    recorded = original_report["config"]

    def comparable(root: Path) -> dict:
        skip = {"cassette.json", "metrics.json"}
        return {
            p.relative_to(root): p
            for p in root.rglob("*")
            if p.is_file() and p.name not in skip
            and not {"work", "inputs"} & set(p.parts)
        }

    with tempfile.TemporaryDirectory(prefix="replay-verify-") as tmp:
        replay_dir = Path(tmp) / "replay"
        config = build_config(
            {
                **{name: recorded[name] for name in COUNT_FIELDS},
                "max_date": recorded["max_date"],
                "model": recorded["model"],
                "search": recorded["search"],
                "sandbox": recorded["sandbox"],
                "executor": recorded["executor"],
                "transport": recorded["transport"],
            },
            mode="replay",
            run_dir=replay_dir,
            cassette_path=cassette,
        )
        dataset = original / "inputs" / original_report["dataset"]
        if not dataset.is_file():
            print(f"run dir has no dataset copy at {dataset}; cannot replay", file=sys.stderr)
            return 2
        run_analysis(dataset, AnalysisGoal(original_report["goal"]), config)

        mismatches: list[str] = []
        original_files = comparable(original)
        replay_files = comparable(replay_dir)
        for rel, path in sorted(original_files.items()):
            twin = replay_files.get(rel)
            if twin is None:
                mismatches.append(f"missing in replay: {rel}")
            elif rel.name == "report.json":
                if _normalized_report(path) != _normalized_report(twin):
                    mismatches.append(f"report differs: {rel}")
            elif not filecmp.cmp(path, twin, shallow=False):
                mismatches.append(f"content differs: {rel}")
        for rel in sorted(set(replay_files) - set(original_files)):
            mismatches.append(f"extra in replay: {rel}")

    if mismatches:
        for m in mismatches:
            print(m, file=sys.stderr)
        return 2
    print("replay matches the recorded run")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help; normalize
        return 2 if exc.code not in (0, None) else 0
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "eval":
            return _cmd_eval(args)
        return _cmd_replay_verify(args)
    except CassetteMiss as exc:
        print(f"cassette miss: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ParseError, FileNotFoundError, FileExistsError) as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
