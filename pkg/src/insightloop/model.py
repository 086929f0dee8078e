"""Dataclasses shared across pipeline stages."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class AnalysisGoal:
    text: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("analysis goal must be non-empty")


@dataclass(frozen=True)
class RoleSpec:
    """A designed analytical persona that raises questions from its own angle."""

    name: str
    background: str
    domain_focus: str
    traits: tuple[str, ...]
    capabilities: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "background": self.background,
            "domain_focus": self.domain_focus,
            "traits": list(self.traits),
            "capabilities": list(self.capabilities),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoleSpec":
        return cls(
            name=d["name"],
            background=d["background"],
            domain_focus=d["domain_focus"],
            traits=tuple(d["traits"]),
            capabilities=tuple(d["capabilities"]),
        )


@dataclass(frozen=True)
class Question:
    text: str
    source_role: str
    iteration: int

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("question text must be non-empty")
        if self.iteration < 1:
            raise ValueError("iteration must be >= 1")

    def to_dict(self) -> dict:
        return {"text": self.text, "source_role": self.source_role, "iteration": self.iteration}

    @classmethod
    def from_dict(cls, d: dict) -> "Question":
        return cls(text=d["text"], source_role=d["source_role"], iteration=d["iteration"])


@dataclass(frozen=True)
class SelectedQuestion:
    question: Question
    justification: str

    def __post_init__(self) -> None:
        if not self.justification.strip():
            raise ValueError("justification must be non-empty")

    def to_dict(self) -> dict:
        return {"question": self.question.to_dict(), "justification": self.justification}


@dataclass(frozen=True)
class Insight:
    text: str
    question: Question
    evidence: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("insight text must be non-empty")

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "question": self.question.to_dict(),
            "evidence": list(self.evidence),
        }


class History:
    """Append-only record of answered (question, insight) pairs within a run."""

    def __init__(self) -> None:
        self._entries: list[tuple[Question, Insight]] = []

    def append(self, question: Question, insight: Insight) -> None:
        self._entries.append((question, insight))

    @property
    def entries(self) -> tuple[tuple[Question, Insight], ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def to_dict(self) -> list[dict]:
        return [
            {"question": q.to_dict(), "insight": i.to_dict()} for q, i in self._entries
        ]

    def render_for_prompt(self, insight_chars: int = 500) -> str:
        """Prior pairs for prompts; long insights truncated, full text in artifacts."""
        if not self._entries:
            return "No questions have been answered yet."
        lines = []
        for n, (question, insight) in enumerate(self._entries, start=1):
            text = insight.text
            if len(text) > insight_chars:
                text = text[:insight_chars] + "…"
            lines.append(f"{n}. Q: {question.text}\n   Insight: {text}")
        return "\n".join(lines)


@dataclass(frozen=True)
class KnowledgeItem:
    statement: str
    relevance: str
    source: str  # external | internal
    citation: str | None = None

    def to_dict(self) -> dict:
        return {
            "statement": self.statement,
            "relevance": self.relevance,
            "source": self.source,
            "citation": self.citation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KnowledgeItem":
        return cls(
            statement=d["statement"],
            relevance=d["relevance"],
            source=d["source"],
            citation=d.get("citation"),
        )


@dataclass
class KnowledgeSet:
    items: list[KnowledgeItem] = field(default_factory=list)
    acquisition: str = "vanilla"  # retrieved | vanilla

    def validate(self) -> None:
        if self.acquisition not in ("retrieved", "vanilla"):
            raise ValueError(f"unknown acquisition: {self.acquisition}")
        for item in self.items:
            if item.source not in ("external", "internal"):
                raise ValueError(f"unknown knowledge source: {item.source}")
        if self.acquisition == "retrieved" and not any(
            item.source == "external" for item in self.items
        ):
            raise ValueError("retrieved knowledge must contain an external item")

    def to_dict(self) -> dict:
        return {
            "acquisition": self.acquisition,
            "items": [item.to_dict() for item in self.items],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KnowledgeSet":
        return cls(
            items=[KnowledgeItem.from_dict(i) for i in d["items"]],
            acquisition=d["acquisition"],
        )

    def render_for_prompt(self) -> str:
        if not self.items:
            return "No domain knowledge is available for this analysis."
        lines = []
        for item in self.items:
            cite = f" [source: {item.citation}]" if item.citation else ""
            lines.append(f"- {item.statement} (why it matters: {item.relevance}){cite}")
        return "\n".join(lines)
