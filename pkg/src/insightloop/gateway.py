"""Single chokepoint for model completions, embeddings, and web search.

All agent traffic flows through :class:`Gateway`, which logs every call and
optionally records it to (or replays it from) a :class:`Cassette`. Under a
fixed cassette the whole pipeline is a pure function of its inputs, which is
what makes the end-to-end suite runnable offline and byte-reproducible.

Cassette entries are keyed by a content fingerprint of the request, not by
call order, so unrelated test refactors do not invalidate recordings.
Repeated identical requests (e.g. schema-retry re-asks) are recorded as
separate entries and replayed in first-in-first-out order per fingerprint.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .artifacts import canonical_json
from .errors import CassetteMiss, DimensionMismatch, SchemaError

CASSETTE_MODES = ("record", "replay", "passthrough")

# Parse failures are retried this many extra times before SchemaError surfaces.
SCHEMA_RETRIES = 2


@dataclass(frozen=True)
class Decoding:
    temperature: float = 0.0
    max_output: int = 2048


@dataclass(frozen=True)
class ModelRequest:
    role_name: str
    prompt: str
    attachments: tuple[Path, ...] = ()
    decoding: Decoding = Decoding()

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.decoding.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass
class ModelResponse:
    text: str
    parsed: Any = None
    usage: dict[str, int] = field(default_factory=dict)


def _digest(payload: Any) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")
    ).hexdigest()


def attachment_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def complete_fingerprint(request: ModelRequest) -> str:
    return _digest(
        {
            "kind": "complete",
            "role_name": request.role_name,
            "prompt": request.prompt,
            "attachments": [attachment_digest(p) for p in request.attachments],
        }
    )


def embed_fingerprint(texts: list[str]) -> str:
    return _digest({"kind": "embed", "texts": list(texts)})


def search_fingerprint(query: str, max_date: str, k: int) -> str:
    return _digest({"kind": "search", "query": query, "max_date": max_date, "k": k})


class Cassette:
    """Append-only log of gateway traffic with FIFO replay per fingerprint."""

    def __init__(self, mode: str = "record", entries: list[dict] | None = None):
        if mode not in CASSETTE_MODES:
            raise ValueError(f"unknown cassette mode: {mode}")
        self.mode = mode
        self.entries: list[dict] = list(entries or [])
        self._cursors: dict[str, int] = {}
        self._by_fingerprint: dict[str, list[int]] = {}
        for i, entry in enumerate(self.entries):
            self._by_fingerprint.setdefault(entry["fingerprint"], []).append(i)

    @classmethod
    def load(cls, path: Path, mode: str = "replay") -> "Cassette":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(mode=mode, entries=doc["entries"])

    def save(self, path: Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(canonical_json({"entries": self.entries}), encoding="utf-8")

    def append(self, kind: str, fingerprint: str, request: dict, response: dict) -> None:
        entry = {
            "kind": kind,
            "fingerprint": fingerprint,
            "request": request,
            "response": response,
        }
        self.entries.append(entry)
        self._by_fingerprint.setdefault(fingerprint, []).append(len(self.entries) - 1)

    def lookup(self, fingerprint: str) -> dict:
        slots = self._by_fingerprint.get(fingerprint)
        cursor = self._cursors.get(fingerprint, 0)
        if not slots or cursor >= len(slots):
            raise CassetteMiss(f"no recorded response for fingerprint {fingerprint[:12]}…")
        self._cursors[fingerprint] = cursor + 1
        return self.entries[slots[cursor]]["response"]


@dataclass(frozen=True)
class CallRecord:
    kind: str  # complete | embed | search
    role_name: str
    fingerprint: str


class Gateway:
    """Routes agent calls to a transport, a cassette, or both.

    ``cassette.mode`` decides behavior: ``replay`` never touches the
    transport (strict: unknown fingerprints raise CassetteMiss), ``record``
    calls the transport and appends every response, ``passthrough`` (or no
    cassette) just calls the transport. Thread-safe; the engine fans out
    concurrent completions during multi-path code generation.
    """

    def __init__(self, transport=None, cassette: Cassette | None = None):
        mode = cassette.mode if cassette else "passthrough"
        if mode != "replay" and transport is None:
            raise ValueError("a transport is required outside replay mode")
        self.transport = transport
        self.cassette = cassette
        self.call_log: list[CallRecord] = []
        self._lock = threading.Lock()

    @property
    def mode(self) -> str:
        return self.cassette.mode if self.cassette else "passthrough"

    def calls(self, kind: str | None = None) -> list[CallRecord]:
        with self._lock:
            log = list(self.call_log)
        return log if kind is None else [c for c in log if c.kind == kind]

    # -- completions -------------------------------------------------------

    def complete(
        self, request: ModelRequest, parser: Callable[[str], Any] | None = None
    ) -> ModelResponse:
        """One agent call; retries on parse failure per the retry policy."""
        fingerprint = complete_fingerprint(request)
        last_error: Exception | None = None
        for _ in range(SCHEMA_RETRIES + 1):
            text, usage = self._complete_raw(request, fingerprint)
            if parser is None:
                return ModelResponse(text=text, usage=usage)
            try:
                parsed = parser(text)
            except (SchemaError, ValueError, KeyError, TypeError) as exc:
                last_error = exc
                continue
            return ModelResponse(text=text, parsed=parsed, usage=usage)
        raise SchemaError(
            f"agent '{request.role_name}' output failed its schema after "
            f"{SCHEMA_RETRIES + 1} attempts: {last_error}"
        )

    def _complete_raw(self, request: ModelRequest, fingerprint: str) -> tuple[str, dict]:
        with self._lock:
            self.call_log.append(CallRecord("complete", request.role_name, fingerprint))
            if self.mode == "replay":
                payload = self.cassette.lookup(fingerprint)
                return payload["text"], dict(payload.get("usage", {}))
        text, usage = self.transport.complete(request)
        if self.mode == "record":
            with self._lock:
                self.cassette.append(
                    "complete",
                    fingerprint,
                    request={
                        "role_name": request.role_name,
                        "prompt": request.prompt,
                        "attachments": [attachment_digest(p) for p in request.attachments],
                        "temperature": request.decoding.temperature,
                        "max_output": request.decoding.max_output,
                    },
                    response={"text": text, "usage": usage},
                )
        return text, usage

    # -- embeddings --------------------------------------------------------

    def embed(self, texts: list[str]) -> list[list[float]]:
        if not texts:
            raise ValueError("texts must be non-empty")
        fingerprint = embed_fingerprint(texts)
        with self._lock:
            self.call_log.append(CallRecord("embed", "", fingerprint))
            if self.mode == "replay":
                vectors = self.cassette.lookup(fingerprint)["vectors"]
                return [list(v) for v in vectors]
        vectors = self.transport.embed(texts)
        if len(vectors) != len(texts):
            raise DimensionMismatch(
                f"provider returned {len(vectors)} vectors for {len(texts)} texts"
            )
        dims = {len(v) for v in vectors}
        if len(dims) > 1:
            raise DimensionMismatch(f"ragged embedding dimensions: {sorted(dims)}")
        if self.mode == "record":
            with self._lock:
                self.cassette.append(
                    "embed",
                    fingerprint,
                    request={"texts": list(texts)},
                    response={"vectors": [list(v) for v in vectors]},
                )
        return [list(v) for v in vectors]

    # -- web search --------------------------------------------------------

    def search(self, query: str, max_date: str, k: int) -> list[dict]:
        """One provider query. Results are raw; date filtering is the caller's."""
        fingerprint = search_fingerprint(query, max_date, k)
        with self._lock:
            self.call_log.append(CallRecord("search", "", fingerprint))
            if self.mode == "replay":
                return [dict(r) for r in self.cassette.lookup(fingerprint)["results"]]
        results = self.transport.search(query, max_date, k)
        if self.mode == "record":
            with self._lock:
                self.cassette.append(
                    "search",
                    fingerprint,
                    request={"query": query, "max_date": max_date, "k": k},
                    response={"results": [dict(r) for r in results]},
                )
        return [dict(r) for r in results]
