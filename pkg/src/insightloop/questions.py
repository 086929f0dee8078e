"""Question raising: design analytical roles, let each pose questions from
its own perspective, then have a judge converge the pool to a small
high-quality selection. Selections must be verbatim members of the pool;
a judge that keeps inventing questions is replaced by a deterministic
round-robin fallback so the loop never stalls.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

from . import prompts
from .errors import SchemaError
from .gateway import Gateway, ModelRequest
from .model import AnalysisGoal, History, KnowledgeSet, Question, RoleSpec, SelectedQuestion
from .profiler import DatasetProfile, render_profile_for_prompt


def _normalize(text: str) -> str:
    return " ".join(text.split())


def design_roles(
    profile: DatasetProfile,
    goal: AnalysisGoal,
    knowledge: KnowledgeSet,
    gateway: Gateway,
    n_r: int,
) -> list[RoleSpec]:
    """Design exactly ``n_r`` analytical roles; duplicate names get a numeric suffix."""

    def parse(text: str) -> list[dict]:
        payload = prompts.parse_json_block(text)
        roles = prompts.require_keys(payload, "roles")["roles"]
        if not isinstance(roles, list) or len(roles) < n_r:
            count = len(roles) if isinstance(roles, list) else 0
            raise SchemaError(f"need {n_r} roles, got {count}")
        for raw in roles[:n_r]:
            for key in ("name", "background", "domain_focus"):
                prompts.require_string(raw, key)
            for key in ("traits", "capabilities"):
                value = prompts.require_keys(raw, key)[key]
                if not isinstance(value, list) or not value:
                    raise SchemaError(f"role field '{key}' must be a non-empty list")
        return roles[:n_r]

    request = ModelRequest(
        role_name="role_designer",
        prompt=prompts.render(
            "role_designer",
            profile=render_profile_for_prompt(profile),
            goal=goal.text,
            knowledge=knowledge.render_for_prompt(),
            n_r=str(n_r),
        ),
    )
    raw_roles = gateway.complete(request, parser=parse).parsed

    roles: list[RoleSpec] = []
    used_names: set[str] = set()
    for raw in raw_roles:
        name = raw["name"].strip()
        if name in used_names:
            suffix = 2
            while f"{name} {suffix}" in used_names:
                suffix += 1
            name = f"{name} {suffix}"
        used_names.add(name)
        roles.append(
            RoleSpec(
                name=name,
                background=raw["background"],
                domain_focus=raw["domain_focus"],
                traits=tuple(str(t) for t in raw["traits"]),
                capabilities=tuple(str(c) for c in raw["capabilities"]),
            )
        )
    return roles


def raise_questions(
    role: RoleSpec,
    profile: DatasetProfile,
    goal: AnalysisGoal,
    knowledge: KnowledgeSet,
    history: History,
    gateway: Gateway,
    iteration: int,
    per_role_m: int,
    flags: list[str] | None = None,
) -> list[Question]:
    """One role's contribution to the pool; a failing role contributes nothing."""

    def parse(text: str) -> list[str]:
        payload = prompts.parse_json_block(text)
        questions = prompts.require_keys(payload, "questions")["questions"]
        if not isinstance(questions, list) or not questions:
            raise SchemaError("questions must be a non-empty list")
        if not all(isinstance(q, str) and q.strip() for q in questions):
            raise SchemaError("each question must be a non-empty string")
        return questions

    request = ModelRequest(
        role_name="question_raiser",
        prompt=prompts.render(
            "question_raising",
            role_name=role.name,
            role_background=role.background,
            role_focus=role.domain_focus,
            role_traits=", ".join(role.traits),
            role_capabilities=", ".join(role.capabilities),
            profile=render_profile_for_prompt(profile),
            goal=goal.text,
            knowledge=knowledge.render_for_prompt(),
            iteration=str(iteration),
            history=history.render_for_prompt(),
            per_role_m=str(per_role_m),
        ),
    )
    try:
        texts = gateway.complete(request, parser=parse).parsed
    except SchemaError:
        if flags is not None:
            flags.append(f"question_raiser[{role.name}] iter {iteration}: schema failure, no questions")
        return []
    return [
        Question(text=t.strip(), source_role=role.name, iteration=iteration)
        for t in texts[:per_role_m]
    ]


def raise_question_pool(
    roles: list[RoleSpec],
    profile: DatasetProfile,
    goal: AnalysisGoal,
    knowledge: KnowledgeSet,
    history: History,
    gateway: Gateway,
    iteration: int,
    per_role_m: int,
    flags: list[str] | None = None,
) -> list[Question]:
    """Union over roles, preserving role order. Roles run concurrently."""
    with ThreadPoolExecutor(max_workers=max(1, len(roles))) as pool:
        futures = [
            pool.submit(
                raise_questions,
                role, profile, goal, knowledge, history, gateway,
                iteration, per_role_m, flags,
            )
            for role in roles
        ]
        per_role = [f.result() for f in futures]
    return [q for questions in per_role for q in questions]


def _render_pool(pool: list[Question]) -> str:
    return "\n".join(
        f"{i}. {q.text} (from {q.source_role})" for i, q in enumerate(pool, start=1)
    )


def _fallback_selection(pool: list[Question], select_s: int) -> list[SelectedQuestion]:
    """Deterministic round-robin: first question of each role, then seconds, etc."""
    by_role: dict[str, list[Question]] = {}
    role_order: list[str] = []
    for q in pool:
        if q.source_role not in by_role:
            role_order.append(q.source_role)
        by_role.setdefault(q.source_role, []).append(q)
    picked: list[SelectedQuestion] = []
    seen: set[str] = set()
    depth = 0
    while len(picked) < min(select_s, len(pool)):
        advanced = False
        for role in role_order:
            questions = by_role[role]
            if depth < len(questions):
                advanced = True
                q = questions[depth]
                if _normalize(q.text) not in seen:
                    seen.add(_normalize(q.text))
                    picked.append(
                        SelectedQuestion(
                            question=q,
                            justification="Deterministic fallback selection (judge unavailable).",
                        )
                    )
                    if len(picked) == min(select_s, len(pool)):
                        break
        if not advanced:
            break
        depth += 1
    return picked


def converge(
    pool: list[Question],
    profile: DatasetProfile,
    goal: AnalysisGoal,
    knowledge: KnowledgeSet,
    history: History,
    gateway: Gateway,
    select_s: int,
    flags: list[str] | None = None,
) -> list[SelectedQuestion]:
    """Judge selects min(select_s, |pool|) distinct questions, verbatim from the pool."""
    if not pool:
        raise ValueError("converge requires a non-empty pool")
    want = min(select_s, len(pool))
    by_normalized = {}
    for q in pool:
        by_normalized.setdefault(_normalize(q.text), q)

    def parse(text: str) -> list[SelectedQuestion]:
        payload = prompts.parse_json_block(text)
        raw = prompts.require_keys(payload, "selections")["selections"]
        if not isinstance(raw, list):
            raise SchemaError("selections must be a list")
        picked: list[SelectedQuestion] = []
        seen: set[str] = set()
        for entry in raw:
            question_text = prompts.require_string(entry, "question")
            justification = prompts.require_string(entry, "justification")
            norm = _normalize(question_text)
            if norm not in by_normalized:
                raise SchemaError(f"selected question is not in the pool: {question_text!r}")
            if norm in seen:
                raise SchemaError("duplicate selection")
            seen.add(norm)
            picked.append(
                SelectedQuestion(question=by_normalized[norm], justification=justification)
            )
        if len(picked) < want:
            raise SchemaError(f"need {want} selections, got {len(picked)}")
        return picked[:want]

    request = ModelRequest(
        role_name="question_judge",
        prompt=prompts.render(
            "question_judge",
            profile=render_profile_for_prompt(profile),
            goal=goal.text,
            knowledge=knowledge.render_for_prompt(),
            history=history.render_for_prompt(),
            pool=_render_pool(pool),
            select_s=str(want),
        ),
    )
    try:
        return gateway.complete(request, parser=parse).parsed
    except SchemaError:
        if flags is not None:
            flags.append("question_judge: schema failure, deterministic fallback selection")
        return _fallback_selection(pool, select_s)
