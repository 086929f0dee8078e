"""Shared test helpers: canned transports and gateway builders."""

from __future__ import annotations

import json
from collections import defaultdict

from insightloop.errors import TransportError
from insightloop.gateway import Cassette, Gateway
from insightloop.transports import ScriptedTransport


def json_block(payload) -> str:
    return f"```json\n{json.dumps(payload)}\n```"


def python_block(code: str, prose: str = "") -> str:
    return f"{prose}\n```python\n{code}\n```"


def const(text: str):
    return lambda prompt: text


def seq(*texts: str):
    """Handler that walks through responses, sticking on the last one."""
    state = {"i": 0}

    def handler(prompt: str) -> str:
        text = texts[min(state["i"], len(texts) - 1)]
        state["i"] += 1
        return text

    return handler


class StubTransport:
    """Per-role canned handlers with prompt/attachment capture."""

    def __init__(self, handlers=None, embed_fn=None, search_fn=None):
        self.handlers = dict(handlers or {})
        self.embed_fn = embed_fn
        self.search_fn = search_fn
        self.prompts = defaultdict(list)
        self.attachments = defaultdict(list)

    def complete(self, request):
        self.prompts[request.role_name].append(request.prompt)
        self.attachments[request.role_name].append(tuple(request.attachments))
        handler = self.handlers.get(request.role_name)
        if handler is None:
            raise AssertionError(f"no stub handler for agent {request.role_name!r}")
        return handler(request.prompt), {}

    def embed(self, texts):
        if self.embed_fn is None:
            return ScriptedTransport().embed(texts)
        return self.embed_fn(texts)

    def search(self, query, max_date, k):
        if self.search_fn is None:
            raise TransportError("no stub search provider")
        return self.search_fn(query, max_date, k)


class OverlayTransport:
    """ScriptedTransport with a few roles overridden for a specific test."""

    def __init__(self, overrides=None, base=None, search_fn=None):
        self.base = base or ScriptedTransport()
        self.overlay = StubTransport(overrides or {}, search_fn=search_fn)

    def complete(self, request):
        self.overlay.prompts[request.role_name].append(request.prompt)
        self.overlay.attachments[request.role_name].append(tuple(request.attachments))
        handler = self.overlay.handlers.get(request.role_name)
        if handler is not None:
            return handler(request.prompt), {}
        return self.base.complete(request)

    def embed(self, texts):
        return self.base.embed(texts)

    def search(self, query, max_date, k):
        if self.overlay.search_fn is not None:
            return self.overlay.search_fn(query, max_date, k)
        return self.base.search(query, max_date, k)


def live_gateway(transport) -> Gateway:
    return Gateway(transport=transport, cassette=None)


def record_gateway(transport) -> Gateway:
    return Gateway(transport=transport, cassette=Cassette(mode="record"))


def replay_gateway_from(record: Gateway) -> Gateway:
    """Fresh replay gateway over the entries a record gateway accumulated."""
    cassette = Cassette(mode="replay", entries=list(record.cassette.entries))
    return Gateway(transport=None, cassette=cassette)


SALES_CSV = """region,category,week,units,revenue
north,tools,2025-01-06,12,240.5
south,tools,2025-01-06,7,140.0
north,garden,2025-01-13,3,90.25
south,garden,2025-01-13,NA,75.0
east,tools,2025-01-20,9,
north,tools,2025-01-06,12,240.5
west,paint,2025-01-27,4,88.8
"""
