"""Run configuration: defaults, config-file loading, CLI overrides."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import yaml

from .errors import ConfigError

MODES = ("live", "record", "replay")
TRANSPORTS = ("http", "scripted")
EXECUTORS = ("subprocess", "scripted")

COUNT_FIELDS = ("n_iter", "n_q", "n_r", "n_fix", "select_s", "per_role_m")


@dataclass
class ModelSettings:
    name: str = "gpt-4o"
    base_url: str = "https://api.openai.com/v1"
    embed_model: str = "text-embedding-3-small"
    temperature: float = 0.0
    max_output: int = 2048
    per_agent: dict[str, str] = field(default_factory=dict)


@dataclass
class SearchSettings:
    url: str | None = None
    per_query_k: int = 5


@dataclass
class SandboxSettings:
    timeout_s: float = 120.0
    memory_cap_mb: int = 2048
    stdout_cap: int = 64 * 1024
    command: list[str] | None = None


@dataclass
class RunConfig:
    # loop sizes; defaults follow the reference experimental setup
    n_iter: int = 6
    n_q: int = 3
    n_r: int = 3
    n_fix: int = 5
    select_s: int = 2
    per_role_m: int = 3
    max_date: date | None = None
    mode: str = "live"
    run_dir: Path = Path("run")
    cassette_path: Path | None = None
    transport: str = "http"
    executor: str = "subprocess"
    parallel_questions: bool = False
    model: ModelSettings = field(default_factory=ModelSettings)
    search: SearchSettings = field(default_factory=SearchSettings)
    sandbox: SandboxSettings = field(default_factory=SandboxSettings)

    def validate(self) -> None:
        for name in COUNT_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.transport not in TRANSPORTS:
            raise ConfigError(f"transport must be one of {TRANSPORTS}")
        if self.executor not in EXECUTORS:
            raise ConfigError(f"executor must be one of {EXECUTORS}")
        if self.sandbox.timeout_s <= 0:
            raise ConfigError("sandbox timeout must be positive")

    def resolved_cassette_path(self) -> Path:
        return self.cassette_path or (self.run_dir / "cassette.json")

    def to_dict(self) -> dict:
        return {
            "n_iter": self.n_iter,
            "n_q": self.n_q,
            "n_r": self.n_r,
            "n_fix": self.n_fix,
            "select_s": self.select_s,
            "per_role_m": self.per_role_m,
            "max_date": self.max_date.isoformat() if self.max_date else None,
            "mode": self.mode,
            "transport": self.transport,
            "executor": self.executor,
            "parallel_questions": self.parallel_questions,
            "model": {
                "name": self.model.name,
                "base_url": self.model.base_url,
                "embed_model": self.model.embed_model,
                "temperature": self.model.temperature,
                "max_output": self.model.max_output,
                "per_agent": dict(self.model.per_agent),
            },
            "search": {"url": self.search.url, "per_query_k": self.search.per_query_k},
            "sandbox": {
                "timeout_s": self.sandbox.timeout_s,
                "memory_cap_mb": self.sandbox.memory_cap_mb,
                "stdout_cap": self.sandbox.stdout_cap,
                "command": list(self.sandbox.command) if self.sandbox.command else None,
            },
        }


def _parse_date(value) -> date | None:
    if value in (None, ""):
        return None
    if isinstance(value, date):
        return value
    try:
        return date.fromisoformat(str(value))
    except ValueError as exc:
        raise ConfigError(f"invalid max_date {value!r}: {exc}") from exc


def load_config_file(path: Path) -> dict:
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must contain a mapping")
    return doc


def build_config(file_doc: dict | None = None, **overrides) -> RunConfig:
    """Defaults, overlaid with the config file, overlaid with explicit overrides.

    ``overrides`` values of None mean "not given" and are ignored.
    """
    config = RunConfig()
    doc = dict(file_doc or {})

    counts = doc.get("counts", {})
    for name in COUNT_FIELDS:
        if name in counts:
            setattr(config, name, counts[name])
        elif name in doc:
            setattr(config, name, doc[name])
    for name in ("mode", "transport", "executor", "parallel_questions"):
        if name in doc:
            setattr(config, name, doc[name])
    if "max_date" in doc:
        config.max_date = _parse_date(doc["max_date"])
    if "run_dir" in doc:
        config.run_dir = Path(doc["run_dir"])
    if "cassette" in doc:
        config.cassette_path = Path(doc["cassette"])

    model = doc.get("model", {})
    for name in ("name", "base_url", "embed_model", "temperature", "max_output"):
        if name in model:
            setattr(config.model, name, model[name])
    if "per_agent" in model:
        config.model.per_agent = dict(model["per_agent"])
    search = doc.get("search", {})
    if "url" in search:
        config.search.url = search["url"]
    if "per_query_k" in search:
        config.search.per_query_k = search["per_query_k"]
    sandbox = doc.get("sandbox", {})
    for name in ("timeout_s", "memory_cap_mb", "stdout_cap"):
        if name in sandbox:
            setattr(config.sandbox, name, sandbox[name])
    if "command" in sandbox and sandbox["command"]:
        config.sandbox.command = list(sandbox["command"])

    for name, value in overrides.items():
        if value is None:
            continue
        if name == "max_date":
            config.max_date = _parse_date(value)
        elif name == "run_dir":
            config.run_dir = Path(value)
        elif name == "cassette_path":
            config.cassette_path = Path(value)
        elif hasattr(config, name):
            setattr(config, name, value)
        else:
            raise ConfigError(f"unknown config override: {name}")

    config.validate()
    return config
