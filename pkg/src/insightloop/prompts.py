"""Prompt template loading and structured-output parsing.

Templates live as text files under ``insightloop/prompts`` and use
``string.Template`` placeholders (``${name}``). Every agent is contracted to
answer with a fenced block; the helpers here extract and validate it.
"""

from __future__ import annotations

import json
import re
from functools import lru_cache
from importlib import resources
from string import Template

from .errors import SchemaError

_JSON_BLOCK = re.compile(r"```json\s*\n(.*?)```", re.DOTALL)
_PYTHON_BLOCK = re.compile(r"```python\s*\n(.*?)```", re.DOTALL)


@lru_cache(maxsize=None)
def load_template(name: str) -> Template:
    text = (
        resources.files("insightloop").joinpath("prompts").joinpath(f"{name}.txt")
    ).read_text(encoding="utf-8")
    return Template(text)


def render(name: str, **values: str) -> str:
    try:
        return load_template(name).substitute(**values)
    except KeyError as exc:
        raise ValueError(f"template '{name}' missing placeholder value: {exc}") from exc


def parse_json_block(text: str) -> dict | list:
    """Extract the last fenced ```json block and decode it."""
    matches = _JSON_BLOCK.findall(text)
    if not matches:
        raise SchemaError("no fenced json block in agent output")
    try:
        return json.loads(matches[-1])
    except json.JSONDecodeError as exc:
        raise SchemaError(f"fenced json block is not valid JSON: {exc}") from exc


def parse_python_block(text: str) -> str:
    """Extract the last fenced ```python block (non-empty)."""
    matches = _PYTHON_BLOCK.findall(text)
    if not matches:
        raise SchemaError("no fenced python block in agent output")
    code = matches[-1].strip("\n")
    if not code.strip():
        raise SchemaError("fenced python block is empty")
    return code


def require_keys(payload: dict, *keys: str) -> dict:
    if not isinstance(payload, dict):
        raise SchemaError(f"expected a JSON object, got {type(payload).__name__}")
    missing = [k for k in keys if k not in payload]
    if missing:
        raise SchemaError(f"agent output missing keys: {missing}")
    return payload


def require_string(payload: dict, key: str) -> str:
    value = require_keys(payload, key)[key]
    if not isinstance(value, str) or not value.strip():
        raise SchemaError(f"key '{key}' must be a non-empty string")
    return value
