"""Drives the full iterative question-answering loop and owns all run state.

One run: profile the dataset, acquire knowledge once, design roles once,
then for each iteration raise a question pool, converge it, and answer each
selected question, appending (question, insight) pairs to the history that
later iterations see. Insights are finally consolidated into a summary.
Everything is persisted under the run directory; there is no other state.
"""

from __future__ import annotations

import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import prompts
from .artifacts import write_json, write_text
from .config import RunConfig
from .engine import AnswerBundle, answer_question
from .errors import CassetteMiss, SchemaError
from .execution import ScriptedExecutor, SubprocessExecutor
from .gateway import Cassette, Gateway, ModelRequest
from .knowledge import acquire_knowledge
from .model import AnalysisGoal, History, KnowledgeSet
from .profiler import DatasetProfile, profile_dataset, render_profile, render_profile_for_prompt
from .questions import converge, design_roles, raise_question_pool
from .transports import HttpTransport, ScriptedTransport


def build_gateway(config: RunConfig) -> Gateway:
    if config.mode == "replay":
        # strict replay: no transport is ever constructed, nothing can dial out
        path = config.resolved_cassette_path()
        if not path.is_file():
            raise CassetteMiss(f"replay cassette not found: {path}")
        return Gateway(transport=None, cassette=Cassette.load(path, mode="replay"))
    if config.transport == "scripted":
        transport = ScriptedTransport()
    else:
        transport = HttpTransport(
            base_url=config.model.base_url,
            model=config.model.name,
            embed_model=config.model.embed_model,
            search_url=config.search.url,
            per_agent_models=config.model.per_agent,
        )
    if config.mode == "record":
        return Gateway(transport=transport, cassette=Cassette(mode="record"))
    return Gateway(transport=transport, cassette=None)


def build_executor(config: RunConfig):
    if config.executor == "scripted":
        return ScriptedExecutor()
    return SubprocessExecutor(command=config.sandbox.command)


def first_sentence(text: str) -> str:
    stripped = text.strip()
    for mark in (". ", "! ", "? "):
        pos = stripped.find(mark)
        if pos != -1:
            return stripped[: pos + 1]
    return stripped


def summarize(
    history: History,
    profile: DatasetProfile,
    goal: AnalysisGoal,
    gateway: Gateway,
    flags: list[str] | None = None,
) -> str:
    """Consolidate all insights into one summary document."""
    if len(history) == 0:
        raise ValueError("summarize requires a non-empty history")

    def parse(text: str) -> str:
        return prompts.require_string(prompts.parse_json_block(text), "summary")

    request = ModelRequest(
        role_name="summarizer",
        prompt=prompts.render(
            "summary",
            profile=render_profile_for_prompt(profile),
            goal=goal.text,
            history=history.render_for_prompt(insight_chars=2000),
        ),
    )
    try:
        return gateway.complete(request, parser=parse).parsed
    except SchemaError:
        if flags is not None:
            flags.append("summarizer: schema failure, concatenated-insights fallback")
        parts = [
            f"{i}. {first_sentence(insight.text)}"
            for i, (_, insight) in enumerate(history.entries, start=1)
        ]
        return "Summary (fallback). " + " ".join(parts)


def _persist_bundle(run_dir: Path, question_id: str, bundle: AnswerBundle) -> None:
    base = run_dir / question_id
    write_text(base / "question.txt", bundle.question.text + "\n")
    write_text(base / "clarified.txt", bundle.clarified.text + "\n")
    for candidate in bundle.multipath.candidates:
        write_text(base / "candidates" / f"{candidate.strategy}.code", candidate.code + "\n")
    write_json(
        base / "selection.json",
        {
            "strategy": bundle.selected_strategy,
            "rationale": bundle.selection_rationale,
            "failed_strategies": dict(bundle.multipath.failures),
        },
    )
    for version in bundle.versions:
        vdir = base / "versions" / str(version.index)
        write_text(vdir / "code.py", version.code + "\n")
        write_json(vdir / "reviews.json", [r.to_dict() for r in version.reviews])
        if version.execution is not None:
            write_text(vdir / "stdout.txt", version.execution.stdout)
            write_text(vdir / "stderr.txt", version.execution.stderr)
            write_json(
                vdir / "execution.json",
                {
                    "status": version.execution.status,
                    "wall_time_s": version.execution.wall_time_s,
                    "plot_count": len(version.execution.plot_paths),
                },
            )
            for plot in version.execution.plot_paths:
                plot = Path(plot)
                if plot.is_file():
                    shutil.copyfile(plot, vdir / plot.name)
        if version.insight is not None:
            write_text(vdir / "insight.txt", version.insight.text + "\n")
    write_json(
        base / "judge.json",
        {"version": bundle.judged_index, "rationale": bundle.judge_rationale},
    )
    write_text(base / "insight.txt", bundle.insight.text + "\n")


def run_analysis(
    dataset_path: Path,
    goal: AnalysisGoal,
    config: RunConfig,
    gateway: Gateway | None = None,
    executor=None,
) -> tuple[dict, int]:
    """Execute one full run. Returns (run report dict, exit status).

    Exit status 0 is a clean run, 1 completed with degradations. Fatal
    conditions (unreadable dataset, replay cassette missing or exhausted)
    raise instead. ``gateway``/``executor`` default to what the config
    says; passing them explicitly is for tools and tests.
    """
    config.validate()
    run_dir = Path(config.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    if (run_dir / "report.json").exists():
        raise FileExistsError(f"run directory already holds a report: {run_dir}")

    gateway = gateway or build_gateway(config)
    executor = executor or build_executor(config)
    flags: list[str] = []
    timings: dict[str, float] = {}
    started = time.perf_counter()

    profile = profile_dataset(dataset_path)
    # self-contained run dir: keep the input alongside the artifacts (under
    # its original name, which the profile embeds) so a recorded run can
    # later be replay-verified from the directory alone
    inputs_dir = run_dir / "inputs"
    inputs_dir.mkdir(exist_ok=True)
    shutil.copyfile(dataset_path, inputs_dir / Path(dataset_path).name)
    write_text(run_dir / "profile.json", render_profile(profile))
    timings["profile_s"] = time.perf_counter() - started

    knowledge = acquire_knowledge(
        profile,
        goal,
        gateway,
        n_q=config.n_q,
        max_date=config.max_date,
        per_query_k=config.search.per_query_k,
        run_dir=run_dir,
        flags=flags,
    )
    timings["knowledge_s"] = time.perf_counter() - started

    try:
        roles = design_roles(profile, goal, knowledge, gateway, config.n_r)
        write_json(run_dir / "roles.json", [r.to_dict() for r in roles])
    except SchemaError as exc:
        flags.append(f"role_designer: schema failure, run proceeds with no questions ({exc})")
        roles = []

    history = History()
    question_index: list[dict] = []
    strategy_counts: dict[str, int] = {}
    counter = 0

    for iteration in range(1, config.n_iter + 1):
        if not roles:
            break
        pool = raise_question_pool(
            roles, profile, goal, knowledge, history, gateway,
            iteration=iteration, per_role_m=config.per_role_m, flags=flags,
        )
        if not pool:
            flags.append(f"iteration {iteration}: empty question pool")
            continue
        selections = converge(
            pool, profile, goal, knowledge, history, gateway,
            select_s=config.select_s, flags=flags,
        )
        selected_texts = {s.question.text for s in selections}
        write_json(
            run_dir / "questions" / f"iter-{iteration}.json",
            {
                "iteration": iteration,
                "pool": [q.to_dict() for q in pool],
                "selections": [s.to_dict() for s in selections],
                "rejected": [q.to_dict() for q in pool if q.text not in selected_texts],
            },
        )
        def answer(selection, question_id: str):
            return answer_question(
                selection.question,
                profile,
                goal,
                knowledge,
                gateway,
                executor,
                run_dir=run_dir,
                question_id=question_id,
                dataset_path=dataset_path,
                n_fix=config.n_fix,
                timeout_s=config.sandbox.timeout_s,
                memory_cap_bytes=config.sandbox.memory_cap_mb * 1024 * 1024,
                stdout_cap=config.sandbox.stdout_cap,
                flags=flags,
            )

        question_ids = []
        for selection in selections:
            counter += 1
            question_ids.append(f"q-{counter:03d}")
        if config.parallel_questions and len(selections) > 1:
            # entries within one iteration don't feed each other, so they may
            # fan out; history still gains them in selection order
            with ThreadPoolExecutor(max_workers=len(selections)) as pool:
                futures = [
                    pool.submit(answer, s, qid)
                    for s, qid in zip(selections, question_ids)
                ]
                bundles = [f.result() for f in futures]
        else:
            bundles = [answer(s, qid) for s, qid in zip(selections, question_ids)]

        for selection, question_id, bundle in zip(selections, question_ids, bundles):
            entry = {
                "id": question_id,
                "iteration": iteration,
                "question": selection.question.to_dict(),
                "justification": selection.justification,
            }
            if bundle is None:
                entry["status"] = "skipped"
                write_text(
                    run_dir / question_id / "question.txt", selection.question.text + "\n"
                )
                write_json(
                    run_dir / question_id / "skip.json",
                    {"reason": flags[-1] if flags else "unanswerable"},
                )
            else:
                entry["status"] = "answered"
                entry["strategy"] = bundle.selected_strategy
                entry["versions"] = len(bundle.versions)
                entry["judged_version"] = bundle.judged_index
                strategy_counts[bundle.selected_strategy] = (
                    strategy_counts.get(bundle.selected_strategy, 0) + 1
                )
                _persist_bundle(run_dir, question_id, bundle)
                history.append(selection.question, bundle.insight)
            question_index.append(entry)
    timings["loop_s"] = time.perf_counter() - started

    if len(history) > 0:
        summary = summarize(history, profile, goal, gateway, flags=flags)
        write_text(run_dir / "summary.txt", summary + "\n")
    else:
        summary = ""
        flags.append("no insights produced; summary skipped")
    timings["total_s"] = time.perf_counter() - started

    call_counts = {
        kind: len(gateway.calls(kind)) for kind in ("complete", "embed", "search")
    }
    report = {
        "config": config.to_dict(),
        "goal": goal.text,
        "dataset": Path(dataset_path).name,
        "profile": profile.to_dict(),
        "knowledge": knowledge.to_dict(),
        "roles": [r.to_dict() for r in roles],
        "history": history.to_dict(),
        "summary": summary,
        "questions": question_index,
        "strategy_counts": strategy_counts,
        "degraded": flags,
        "gateway_calls": call_counts,
        # wall-clock timings are measurement metadata; under replay they are
        # omitted so that identical cassettes yield byte-identical reports
        "timings": None if config.mode == "replay" else {
            k: round(v, 3) for k, v in timings.items()
        },
    }
    write_json(run_dir / "report.json", report)
    if config.mode == "record":
        gateway.cassette.save(config.resolved_cassette_path())
    return report, (1 if flags else 0)
