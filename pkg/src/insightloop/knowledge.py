"""On-demand domain knowledge acquisition.

A judge decides whether the analysis needs external knowledge at all. Only
when it says yes do we generate search queries, hit the search provider
under a hard date cap, and synthesize knowledge items from the results;
otherwise a generator produces knowledge from model-internal context only.
Failure degrades down a ladder (retrieved, then vanilla, then none), each
step flagged in the run report, so the pipeline never stalls here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

from . import prompts
from .artifacts import write_json
from .errors import SchemaError, SearchUnavailable, TransportError
from .gateway import Gateway, ModelRequest
from .model import AnalysisGoal, KnowledgeItem, KnowledgeSet
from .profiler import DatasetProfile, render_profile_for_prompt


@dataclass
class SearchQuerySet:
    queries: list[str]

    def validate(self) -> None:
        normalized = [" ".join(q.split()) for q in self.queries]
        if len(set(normalized)) != len(normalized):
            raise ValueError("queries must be pairwise distinct")


@dataclass(frozen=True)
class SearchResult:
    query: str
    title: str
    snippet: str
    url: str
    date: str | None = None

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "title": self.title,
            "snippet": self.snippet,
            "url": self.url,
            "date": self.date,
        }


@dataclass
class SearchResultSet:
    results: list[SearchResult] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"results": [r.to_dict() for r in self.results]}

    def render_for_prompt(self) -> str:
        lines = []
        for r in self.results:
            lines.append(f"- {r.title}: {r.snippet} ({r.url})")
        return "\n".join(lines)


def _normalize(text: str) -> str:
    return " ".join(text.split())


def judge_search_necessity(
    profile: DatasetProfile,
    goal: AnalysisGoal,
    gateway: Gateway,
    flags: list[str] | None = None,
) -> str:
    """Decide "yes" (external search needed) or "no".

    A judge that cannot produce a valid verdict defaults to "no": failing
    toward internal knowledge is the safe direction.
    """

    def parse(text: str) -> str:
        payload = prompts.parse_json_block(text)
        verdict = prompts.require_string(payload, "verdict").strip().lower()
        if verdict not in ("yes", "no"):
            raise SchemaError(f"verdict must be yes or no, got {verdict!r}")
        return verdict

    request = ModelRequest(
        role_name="search_judge",
        prompt=prompts.render(
            "search_judge",
            profile=render_profile_for_prompt(profile),
            goal=goal.text,
        ),
    )
    try:
        return gateway.complete(request, parser=parse).parsed
    except SchemaError:
        if flags is not None:
            flags.append("search_judge: schema failure, defaulted verdict to no")
        return "no"


def generate_queries(
    profile: DatasetProfile,
    goal: AnalysisGoal,
    gateway: Gateway,
    n_q: int,
) -> SearchQuerySet:
    """Produce exactly ``n_q`` distinct search queries.

    Over-production is truncated; under-production is padded by re-asking
    once and unioning the distinct results. Still short after the pad
    attempt raises SchemaError.
    """

    def parse(text: str) -> list[str]:
        payload = prompts.parse_json_block(text)
        queries = prompts.require_keys(payload, "queries")["queries"]
        if not isinstance(queries, list) or not all(isinstance(q, str) for q in queries):
            raise SchemaError("queries must be a list of strings")
        deduped: list[str] = []
        seen = set()
        for q in queries:
            norm = _normalize(q)
            if norm and norm not in seen:
                seen.add(norm)
                deduped.append(q.strip())
        if not deduped:
            raise SchemaError("no usable queries in output")
        return deduped

    request = ModelRequest(
        role_name="query_generator",
        prompt=prompts.render(
            "query_generator",
            profile=render_profile_for_prompt(profile),
            goal=goal.text,
            n_q=str(n_q),
        ),
    )
    queries = gateway.complete(request, parser=parse).parsed
    if len(queries) < n_q:
        more = gateway.complete(request, parser=parse).parsed
        seen = {_normalize(q) for q in queries}
        for q in more:
            if _normalize(q) not in seen:
                seen.add(_normalize(q))
                queries.append(q)
    if len(queries) < n_q:
        raise SchemaError(
            f"query generator produced {len(queries)} distinct queries, need {n_q}"
        )
    result = SearchQuerySet(queries=queries[:n_q])
    result.validate()
    return result


def execute_search(
    queries: SearchQuerySet,
    max_date: date,
    gateway: Gateway,
    per_query_k: int = 5,
) -> SearchResultSet:
    """Union of per-query provider results, date-capped and URL-deduplicated.

    Individual query failures are tolerated; only a total wipeout raises
    SearchUnavailable.
    """
    cap = max_date.isoformat()
    collected: list[SearchResult] = []
    seen_urls: set[str] = set()
    failures = 0
    for query in queries.queries:
        try:
            raw = gateway.search(query, cap, per_query_k)
        except TransportError:
            failures += 1
            continue
        for item in raw[:per_query_k]:
            stamp = item.get("date")
            if stamp:
                try:
                    if date.fromisoformat(str(stamp)[:10]) > max_date:
                        continue
                except ValueError:
                    pass  # undated results are kept; the cap applies to dated ones
            url = item.get("url", "")
            if url and url in seen_urls:
                continue
            if url:
                seen_urls.add(url)
            collected.append(
                SearchResult(
                    query=query,
                    title=item.get("title", ""),
                    snippet=item.get("snippet", ""),
                    url=url,
                    date=str(stamp) if stamp else None,
                )
            )
    if failures == len(queries.queries):
        raise SearchUnavailable("every search query failed at the provider")
    return SearchResultSet(results=collected)


def generate_knowledge(
    results: SearchResultSet,
    profile: DatasetProfile,
    goal: AnalysisGoal,
    gateway: Gateway,
) -> KnowledgeSet:
    """Synthesize retrieved knowledge items from search results.

    Citations must come from the result URLs; an item citing anything else
    is downgraded to internal. An output with no external item at all
    violates the retrieved-set invariant and counts as a schema failure.
    """
    if not results.results:
        raise ValueError("generate_knowledge requires non-empty results")
    valid_urls = {r.url for r in results.results if r.url}

    def parse(text: str) -> list[KnowledgeItem]:
        payload = prompts.parse_json_block(text)
        raw_items = prompts.require_keys(payload, "items")["items"]
        if not isinstance(raw_items, list) or not raw_items:
            raise SchemaError("items must be a non-empty list")
        items = []
        for raw in raw_items:
            statement = prompts.require_string(raw, "statement")
            relevance = prompts.require_string(raw, "relevance")
            citation = raw.get("citation")
            if citation in valid_urls:
                items.append(
                    KnowledgeItem(statement, relevance, source="external", citation=citation)
                )
            else:
                items.append(KnowledgeItem(statement, relevance, source="internal"))
        if not any(item.source == "external" for item in items):
            raise SchemaError("no item carries a citation from the search results")
        return items

    request = ModelRequest(
        role_name="knowledge_generator",
        prompt=prompts.render(
            "knowledge_generator",
            profile=render_profile_for_prompt(profile),
            goal=goal.text,
            results=results.render_for_prompt(),
        ),
    )
    items = gateway.complete(request, parser=parse).parsed
    knowledge = KnowledgeSet(items=items, acquisition="retrieved")
    knowledge.validate()
    return knowledge


def generate_vanilla_knowledge(
    profile: DatasetProfile,
    goal: AnalysisGoal,
    gateway: Gateway,
    flags: list[str] | None = None,
) -> KnowledgeSet:
    """Knowledge from model-internal context only; never touches search."""

    def parse(text: str) -> list[KnowledgeItem]:
        payload = prompts.parse_json_block(text)
        raw_items = prompts.require_keys(payload, "items")["items"]
        if not isinstance(raw_items, list):
            raise SchemaError("items must be a list")
        return [
            KnowledgeItem(
                prompts.require_string(raw, "statement"),
                prompts.require_string(raw, "relevance"),
                source="internal",
            )
            for raw in raw_items
        ]

    request = ModelRequest(
        role_name="vanilla_knowledge_generator",
        prompt=prompts.render(
            "vanilla_knowledge",
            profile=render_profile_for_prompt(profile),
            goal=goal.text,
        ),
    )
    try:
        items = gateway.complete(request, parser=parse).parsed
    except SchemaError:
        if flags is not None:
            flags.append("vanilla_knowledge: schema failure, continuing knowledge-free")
        items = []
    knowledge = KnowledgeSet(items=items, acquisition="vanilla")
    knowledge.validate()
    return knowledge


def acquire_knowledge(
    profile: DatasetProfile,
    goal: AnalysisGoal,
    gateway: Gateway,
    n_q: int,
    max_date: date | None,
    per_query_k: int = 5,
    run_dir: Path | None = None,
    flags: list[str] | None = None,
) -> KnowledgeSet:
    """Full acquisition ladder: retrieved, else vanilla, else knowledge-free."""
    verdict = judge_search_necessity(profile, goal, gateway, flags=flags)
    if verdict == "yes":
        if max_date is None:
            raise ValueError("max_date is required when the retrieved path is taken")
        try:
            queries = generate_queries(profile, goal, gateway, n_q)
            if run_dir is not None:
                write_json(run_dir / "queries.json", {"queries": queries.queries})
            results = execute_search(queries, max_date, gateway, per_query_k)
            if run_dir is not None:
                write_json(run_dir / "search_results.json", results.to_dict())
            knowledge = generate_knowledge(results, profile, goal, gateway)
            if run_dir is not None:
                write_json(run_dir / "knowledge.json", knowledge.to_dict())
            return knowledge
        except (SchemaError, SearchUnavailable) as exc:
            if flags is not None:
                flags.append(f"retrieved knowledge failed ({exc}), falling back to vanilla")
    knowledge = generate_vanilla_knowledge(profile, goal, gateway, flags=flags)
    if run_dir is not None:
        write_json(run_dir / "knowledge.json", knowledge.to_dict())
    return knowledge
