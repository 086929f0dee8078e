"""Turns one selected question into a validated insight.

Pipeline per question: ground the question against the schema, generate
three candidate scripts via distinct reasoning strategies, select one, then
loop {execute, review code and plot, fix} until both reviews pass or the
fix budget is spent. Every surviving version with a successful execution is
interpreted, and a final judge picks the best insight from the whole chain
so a late bad fix cannot erase an earlier good answer.
"""

from __future__ import annotations

import difflib
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import prompts
from .errors import MultiPathExhausted, SchemaError
from .execution import ExecutionOutput, ExecutionRequest, prepare_workdir
from .gateway import Gateway, ModelRequest
from .model import AnalysisGoal, Insight, KnowledgeSet, Question
from .profiler import DatasetProfile, render_profile_for_prompt

STRATEGIES = ("divide_and_conquer", "query_plan", "negative_reasoning")
REVIEW_DIMENSIONS = (
    "requirement_alignment",
    "schema_compliance",
    "operational_risk",
    "data_integrity",
)

NO_PLOT_FINDING = "no plot produced"


@dataclass(frozen=True)
class ClarifiedQuestion:
    original: Question
    text: str
    grounding_notes: str = ""

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("clarified question text must be non-empty")

    def to_dict(self) -> dict:
        return {
            "original": self.original.to_dict(),
            "text": self.text,
            "grounding_notes": self.grounding_notes,
        }


@dataclass(frozen=True)
class CodeCandidate:
    strategy: str
    reasoning: str
    code: str

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy: {self.strategy}")
        if not self.code.strip():
            raise ValueError("candidate code must be non-empty")


@dataclass
class MultiPathResult:
    candidates: list[CodeCandidate]
    failures: dict[str, str] = field(default_factory=dict)

    def by_strategy(self, strategy: str) -> CodeCandidate | None:
        for c in self.candidates:
            if c.strategy == strategy:
                return c
        return None


@dataclass(frozen=True)
class Finding:
    dimension: str
    issue: str

    def to_dict(self) -> dict:
        return {"dimension": self.dimension, "issue": self.issue}


@dataclass
class ReviewReport:
    subject: str  # code | plot
    verdict: str  # PASS | FAIL
    findings: list[Finding] = field(default_factory=list)
    degraded: bool = False  # reviewer unavailable; verdict forced to PASS

    def __post_init__(self) -> None:
        if (self.verdict == "FAIL") != bool(self.findings):
            raise ValueError("FAIL iff findings non-empty")

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "verdict": self.verdict,
            "findings": [f.to_dict() for f in self.findings],
            "degraded": self.degraded,
        }


@dataclass
class CodeVersion:
    index: int
    code: str
    reviews: list[ReviewReport] = field(default_factory=list)
    execution: ExecutionOutput | None = None
    insight: Insight | None = None

    def all_reviews_pass(self) -> bool:
        return bool(self.reviews) and all(r.verdict == "PASS" for r in self.reviews)


@dataclass
class AnswerBundle:
    """Everything answer_question produced for one selected question."""

    question: Question
    clarified: ClarifiedQuestion
    multipath: MultiPathResult
    selected_strategy: str
    selection_rationale: str
    versions: list[CodeVersion]
    judged_index: int
    judge_rationale: str
    insight: Insight


# -- clarification -----------------------------------------------------------


def audit_column_references(text: str, profile: DatasetProfile) -> list[str]:
    """Quoted identifiers in the rewrite that match no profile column."""
    quoted = re.findall(r"`([^`]+)`|'([^']+)'", text)
    names = set(profile.column_names())
    violations = []
    for backtick, single in quoted:
        token = backtick or single
        if token and token not in names:
            violations.append(token)
    return violations


def clarify_question(
    question: Question,
    profile: DatasetProfile,
    goal: AnalysisGoal,
    knowledge: KnowledgeSet,
    gateway: Gateway,
    flags: list[str] | None = None,
) -> ClarifiedQuestion:
    """Schema-grounded rewrite; a failing rewriter degrades to the identity."""

    def parse(text: str) -> tuple[str, str]:
        payload = prompts.parse_json_block(text)
        return (
            prompts.require_string(payload, "question"),
            str(payload.get("notes", "")),
        )

    request = ModelRequest(
        role_name="question_rewriter",
        prompt=prompts.render(
            "question_rewriter",
            profile=render_profile_for_prompt(profile),
            goal=goal.text,
            knowledge=knowledge.render_for_prompt(),
            question=question.text,
        ),
    )
    try:
        rewritten, notes = gateway.complete(request, parser=parse).parsed
    except SchemaError:
        if flags is not None:
            flags.append(f"question_rewriter: schema failure, using the question verbatim")
        return ClarifiedQuestion(original=question, text=question.text, grounding_notes="")
    violations = audit_column_references(rewritten, profile)
    if violations and flags is not None:
        flags.append(
            "question_rewriter: rewrite references unknown columns "
            + ", ".join(sorted(set(violations)))
        )
    return ClarifiedQuestion(original=question, text=rewritten, grounding_notes=notes)


# -- multi-path generation ----------------------------------------------------


def _parse_candidate(text: str) -> tuple[str, str]:
    code = prompts.parse_python_block(text)
    reasoning = text.split("```python", 1)[0].strip()
    return reasoning, code


def generate_candidates(
    clarified: ClarifiedQuestion,
    profile: DatasetProfile,
    goal: AnalysisGoal,
    gateway: Gateway,
) -> MultiPathResult:
    """One candidate per strategy, generated concurrently with distinct prompts."""

    def one(strategy: str) -> CodeCandidate:
        request = ModelRequest(
            role_name=f"coder_{strategy}",
            prompt=prompts.render(
                f"code_{strategy}",
                profile=render_profile_for_prompt(profile),
                goal=goal.text,
                question=clarified.text,
            ),
        )
        reasoning, code = gateway.complete(request, parser=_parse_candidate).parsed
        return CodeCandidate(strategy=strategy, reasoning=reasoning, code=code)

    result = MultiPathResult(candidates=[])
    with ThreadPoolExecutor(max_workers=len(STRATEGIES)) as pool:
        futures = {strategy: pool.submit(one, strategy) for strategy in STRATEGIES}
    for strategy in STRATEGIES:
        try:
            result.candidates.append(futures[strategy].result())
        except SchemaError as exc:
            result.failures[strategy] = str(exc)
    if not result.candidates:
        raise MultiPathExhausted(
            "all code generation strategies failed: " + "; ".join(result.failures)
        )
    return result


def select_code(
    clarified: ClarifiedQuestion,
    profile: DatasetProfile,
    goal: AnalysisGoal,
    multipath: MultiPathResult,
    gateway: Gateway,
    flags: list[str] | None = None,
) -> tuple[CodeVersion, str, str]:
    """Pick the initial code. Returns (version 0, strategy tag, rationale).

    A single live candidate wins without a model call. An invalid selector
    answer falls back deterministically, preferring divide_and_conquer (the
    empirically dominant strategy), then the remaining strategies in order.
    """
    live = multipath.candidates
    if len(live) == 1:
        only = live[0]
        return CodeVersion(index=0, code=only.code), only.strategy, "single live candidate"

    live_tags = {c.strategy for c in live}

    def parse(text: str) -> tuple[str, str]:
        payload = prompts.parse_json_block(text)
        strategy = prompts.require_string(payload, "strategy").strip()
        if strategy not in live_tags:
            raise SchemaError(f"selector chose unavailable strategy {strategy!r}")
        return strategy, str(payload.get("rationale", ""))

    rendered = "\n\n".join(
        f"[{c.strategy}]\n```python\n{c.code}\n```" for c in live
    )
    request = ModelRequest(
        role_name="code_selector",
        prompt=prompts.render(
            "code_selector",
            profile=render_profile_for_prompt(profile),
            goal=goal.text,
            question=clarified.text,
            candidates=rendered,
        ),
    )
    try:
        strategy, rationale = gateway.complete(request, parser=parse).parsed
    except SchemaError:
        strategy = next(s for s in STRATEGIES if s in live_tags)
        rationale = "deterministic fallback after invalid selector output"
        if flags is not None:
            flags.append(f"code_selector: schema failure, fell back to {strategy}")
    chosen = multipath.by_strategy(strategy)
    return CodeVersion(index=0, code=chosen.code), strategy, rationale


# -- reviews ------------------------------------------------------------------


def normalize_dimension(label: str, flags: list[str] | None = None) -> str:
    label = label.strip()
    if label in REVIEW_DIMENSIONS:
        return label
    nearest = difflib.get_close_matches(label, REVIEW_DIMENSIONS, n=1, cutoff=0.0)
    normalized = nearest[0] if nearest else REVIEW_DIMENSIONS[2]
    if flags is not None:
        flags.append(f"review finding dimension {label!r} normalized to {normalized}")
    return normalized


def _parse_review(text: str, subject: str, flags: list[str] | None) -> ReviewReport:
    payload = prompts.parse_json_block(text)
    verdict = prompts.require_string(payload, "verdict").strip().upper()
    if verdict not in ("PASS", "FAIL"):
        raise SchemaError(f"verdict must be PASS or FAIL, got {verdict!r}")
    raw_findings = prompts.require_keys(payload, "findings")["findings"]
    if not isinstance(raw_findings, list):
        raise SchemaError("findings must be a list")
    findings = []
    for raw in raw_findings:
        dimension = prompts.require_string(raw, "dimension")
        issue = prompts.require_string(raw, "issue")
        if subject == "code":
            dimension = normalize_dimension(dimension, flags)
        findings.append(Finding(dimension=dimension, issue=issue))
    if (verdict == "FAIL") != bool(findings):
        raise SchemaError("verdict and findings disagree")
    return ReviewReport(subject=subject, verdict=verdict, findings=findings)


def review_code(
    clarified: ClarifiedQuestion,
    profile: DatasetProfile,
    goal: AnalysisGoal,
    version: CodeVersion,
    gateway: Gateway,
    flags: list[str] | None = None,
) -> ReviewReport:
    """Static review along the four dimensions; degrades to PASS, never FAIL."""
    request = ModelRequest(
        role_name="code_reviewer",
        prompt=prompts.render(
            "code_reviewer",
            profile=render_profile_for_prompt(profile),
            goal=goal.text,
            question=clarified.text,
            code=version.code,
        ),
    )
    try:
        return gateway.complete(
            request, parser=lambda t: _parse_review(t, "code", flags)
        ).parsed
    except SchemaError:
        if flags is not None:
            flags.append(f"code_reviewer: schema failure, degraded PASS at v{version.index}")
        return ReviewReport(subject="code", verdict="PASS", degraded=True)


def review_plot(
    clarified: ClarifiedQuestion,
    profile: DatasetProfile,
    goal: AnalysisGoal,
    plot_path: Path | None,
    gateway: Gateway,
    flags: list[str] | None = None,
) -> ReviewReport:
    """Multimodal plot review; an absent or unreadable plot is an automatic FAIL."""
    if plot_path is None or not Path(plot_path).is_file():
        return ReviewReport(
            subject="plot",
            verdict="FAIL",
            findings=[Finding(dimension="presence", issue=NO_PLOT_FINDING)],
        )
    try:
        from PIL import Image

        with Image.open(plot_path) as image:
            image.verify()
    except Exception as exc:
        return ReviewReport(
            subject="plot",
            verdict="FAIL",
            findings=[Finding(dimension="presence", issue=f"plot file unreadable: {exc}")],
        )
    request = ModelRequest(
        role_name="plot_reviewer",
        prompt=prompts.render(
            "plot_reviewer",
            profile=render_profile_for_prompt(profile),
            goal=goal.text,
            question=clarified.text,
        ),
        attachments=(Path(plot_path),),
    )
    try:
        return gateway.complete(
            request, parser=lambda t: _parse_review(t, "plot", flags)
        ).parsed
    except SchemaError:
        if flags is not None:
            flags.append("plot_reviewer: schema failure, degraded PASS")
        return ReviewReport(subject="plot", verdict="PASS", degraded=True)


def _render_reviews(reviews: list[ReviewReport]) -> str:
    lines = []
    for review in reviews:
        lines.append(f"[{review.subject} review] verdict: {review.verdict}")
        for finding in review.findings:
            lines.append(f"  - {finding.dimension}: {finding.issue}")
    return "\n".join(lines)


def fix_code(
    clarified: ClarifiedQuestion,
    profile: DatasetProfile,
    goal: AnalysisGoal,
    previous: CodeVersion,
    reviews: list[ReviewReport],
    gateway: Gateway,
) -> CodeVersion:
    """Produce the next version from the review feedback."""
    request = ModelRequest(
        role_name="code_fixer",
        prompt=prompts.render(
            "code_fixer",
            profile=render_profile_for_prompt(profile),
            goal=goal.text,
            question=clarified.text,
            code=previous.code,
            reviews=_render_reviews(reviews),
        ),
    )
    _, code = gateway.complete(request, parser=_parse_candidate).parsed
    return CodeVersion(index=previous.index + 1, code=code)


# -- interpretation and judging ------------------------------------------------


def interpret(
    question: Question,
    profile: DatasetProfile,
    output: ExecutionOutput,
    gateway: Gateway,
    flags: list[str] | None = None,
) -> Insight:
    """Multimodal reading of one execution: stdout text plus every plot file."""
    attachments = tuple(Path(p) for p in output.plot_paths if Path(p).is_file())
    evidence = ["stdout"] + [Path(p).name for p in attachments]
    request = ModelRequest(
        role_name="interpreter",
        prompt=prompts.render(
            "interpreter",
            question=question.text,
            profile=render_profile_for_prompt(profile),
            stdout=output.stdout if output.stdout.strip() else "(no output)",
        ),
        attachments=attachments,
    )

    def parse(text: str) -> str:
        return prompts.require_string(prompts.parse_json_block(text), "insight")

    try:
        text = gateway.complete(request, parser=parse).parsed
    except SchemaError:
        if flags is not None:
            flags.append("interpreter: schema failure, degraded insight")
        text = "no interpretable result"
    return Insight(text=text, question=question, evidence=tuple(evidence))


def final_judge(
    question: Question,
    profile: DatasetProfile,
    goal: AnalysisGoal,
    versions: list[CodeVersion],
    gateway: Gateway,
    flags: list[str] | None = None,
) -> tuple[Insight, int, str]:
    """Pick the best insight from the chain. Returns (insight, index, rationale).

    Fallback on invalid judge output: the latest version whose reviews all
    passed, else the latest version carrying an insight.
    """
    with_insight = [v for v in versions if v.insight is not None]
    if not with_insight:
        raise ValueError("final_judge requires at least one version with an insight")
    if len(with_insight) == 1:
        only = with_insight[0]
        return only.insight, only.index, "single interpreted version"

    valid = {v.index for v in with_insight}

    def parse(text: str) -> tuple[int, str]:
        payload = prompts.parse_json_block(text)
        index = prompts.require_keys(payload, "version")["version"]
        if not isinstance(index, int) or index not in valid:
            raise SchemaError(f"judge named invalid version {index!r}")
        return index, str(payload.get("rationale", ""))

    rendered = []
    for v in with_insight:
        verdicts = ",".join(r.verdict for r in v.reviews) or "unreviewed"
        rendered.append(f"- version {v.index}: reviews [{verdicts}]; insight: {v.insight.text}")
    request = ModelRequest(
        role_name="insight_judge",
        prompt=prompts.render(
            "insight_judge",
            question=question.text,
            profile=render_profile_for_prompt(profile),
            goal=goal.text,
            versions="\n".join(rendered),
        ),
    )
    try:
        index, rationale = gateway.complete(request, parser=parse).parsed
    except SchemaError:
        passing = [v for v in with_insight if v.all_reviews_pass()]
        chosen = passing[-1] if passing else with_insight[-1]
        index = chosen.index
        rationale = "deterministic fallback after invalid judge output"
        if flags is not None:
            flags.append(f"insight_judge: schema failure, fell back to version {index}")
    chosen = next(v for v in with_insight if v.index == index)
    return chosen.insight, index, rationale


def _crash_review(output: ExecutionOutput) -> ReviewReport:
    tail = output.stderr.strip()[-800:] or f"execution status {output.status}"
    return ReviewReport(
        subject="code",
        verdict="FAIL",
        findings=[
            Finding(
                dimension="operational_risk",
                issue=f"execution failed ({output.status}): {tail}",
            )
        ],
    )


def answer_question(
    question: Question,
    profile: DatasetProfile,
    goal: AnalysisGoal,
    knowledge: KnowledgeSet,
    gateway: Gateway,
    executor,
    run_dir: Path,
    question_id: str,
    dataset_path: Path,
    n_fix: int,
    timeout_s: float = 120.0,
    memory_cap_bytes: int = 2 * 1024**3,
    stdout_cap: int = 64 * 1024,
    flags: list[str] | None = None,
) -> AnswerBundle | None:
    """Full per-question pipeline. Returns None when the question is unanswerable
    (all strategies failed, or no version executed successfully)."""
    clarified = clarify_question(question, profile, goal, knowledge, gateway, flags=flags)
    try:
        multipath = generate_candidates(clarified, profile, goal, gateway)
    except MultiPathExhausted as exc:
        if flags is not None:
            flags.append(f"{question_id}: {exc}")
        return None
    version, strategy, rationale = select_code(
        clarified, profile, goal, multipath, gateway, flags=flags
    )

    versions = [version]
    while True:
        work_dir = prepare_workdir(run_dir, question_id, version.index, dataset_path)
        version.execution = executor.run(
            ExecutionRequest(
                code=version.code,
                work_dir=work_dir,
                dataset_path=work_dir / "data.csv",
                timeout_s=timeout_s,
                memory_cap_bytes=memory_cap_bytes,
                stdout_cap=stdout_cap,
            )
        )
        reviews: list[ReviewReport] = []
        if version.execution.status != "ok":
            reviews.append(_crash_review(version.execution))
        reviews.append(review_code(clarified, profile, goal, version, gateway, flags=flags))
        plot_path = work_dir / "plot.png"
        reviews.append(
            review_plot(
                clarified,
                profile,
                goal,
                plot_path if plot_path.is_file() else None,
                gateway,
                flags=flags,
            )
        )
        version.reviews = reviews
        if version.execution.status == "ok":
            version.insight = interpret(
                question, profile, version.execution, gateway, flags=flags
            )
        if version.all_reviews_pass() or version.index >= n_fix:
            break
        try:
            version = fix_code(clarified, profile, goal, version, reviews, gateway)
        except SchemaError:
            if flags is not None:
                flags.append(f"{question_id}: code_fixer schema failure, chain ends at v{versions[-1].index}")
            break
        versions.append(version)

    if not any(v.insight is not None for v in versions):
        if flags is not None:
            flags.append(f"{question_id}: no version executed successfully, question skipped")
        return None
    insight, judged_index, judge_rationale = final_judge(
        question, profile, goal, versions, gateway, flags=flags
    )
    return AnswerBundle(
        question=question,
        clarified=clarified,
        multipath=multipath,
        selected_strategy=strategy,
        selection_rationale=rationale,
        versions=versions,
        judged_index=judged_index,
        judge_rationale=judge_rationale,
        insight=insight,
    )
