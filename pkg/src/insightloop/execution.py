"""Client side of the script-execution boundary.

Generated analysis scripts run out of process behind a versioned JSON
protocol: one request document on the worker's stdin, one response document
on its stdout. ``SubprocessExecutor`` spawns the real sandbox worker (the
separate ``sandbox-runner`` package, or any command speaking the protocol);
``ScriptedExecutor`` is an in-process stand-in that round-trips the same
documents, so the whole pipeline is testable without the worker installed.

Work directories are prepared here, by the control plane: the worker's
contract requires a directory that already exists and contains nothing but
the dataset copy.
"""

from __future__ import annotations

import json
import shutil
import stat
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path

PROTOCOL_VERSION = "sandbox-exec/1"
DEFAULT_TIMEOUT_S = 120.0
DEFAULT_MEMORY_CAP = 2 * 1024 * 1024 * 1024
DEFAULT_STDOUT_CAP = 64 * 1024
DATASET_NAME = "data.csv"
PLOT_NAME = "plot.png"

# 1x1 RGBA PNG used by the scripted executor as its canned chart artifact.
TINY_PNG = bytes.fromhex(
    "89504e470d0a1a0a0000000d49484452000000010000000108060000001f15c489"
    "0000000d49444154789c63504858f01f0003e402207b860edc0000000049454e44ae426082"
)


@dataclass
class ExecutionRequest:
    code: str
    work_dir: Path
    dataset_path: Path
    timeout_s: float = DEFAULT_TIMEOUT_S
    memory_cap_bytes: int = DEFAULT_MEMORY_CAP
    stdout_cap: int = DEFAULT_STDOUT_CAP

    def __post_init__(self) -> None:
        if self.timeout_s <= 0:
            raise ValueError("timeout must be positive")

    def to_doc(self) -> dict:
        return {
            "schema": PROTOCOL_VERSION,
            "code": self.code,
            "work_dir": str(self.work_dir),
            "dataset_path": str(self.dataset_path),
            "timeout_s": self.timeout_s,
            "memory_cap_bytes": self.memory_cap_bytes,
            "stdout_cap": self.stdout_cap,
        }


@dataclass
class ExecutionOutput:
    status: str  # ok | error | timeout
    stdout: str
    stderr: str
    plot_paths: list[Path] = field(default_factory=list)
    wall_time_s: float = 0.0

    @classmethod
    def from_doc(cls, doc: dict) -> "ExecutionOutput":
        if doc.get("schema") != PROTOCOL_VERSION:
            raise ValueError(f"unsupported response schema: {doc.get('schema')!r}")
        status = doc["status"]
        if status not in ("ok", "error", "timeout"):
            raise ValueError(f"unknown execution status: {status!r}")
        return cls(
            status=status,
            stdout=doc.get("stdout", ""),
            stderr=doc.get("stderr", ""),
            plot_paths=[Path(p) for p in doc.get("plot_paths", [])],
            wall_time_s=float(doc.get("wall_time_s", 0.0)),
        )

    def to_doc(self) -> dict:
        return {
            "schema": PROTOCOL_VERSION,
            "status": self.status,
            "stdout": self.stdout,
            "stderr": self.stderr,
            "plot_paths": [str(p) for p in self.plot_paths],
            "wall_time_s": self.wall_time_s,
        }


def prepare_workdir(
    run_dir: Path, question_id: str, version_index: int, dataset_path: Path
) -> Path:
    """Fresh per-(question, version) directory holding a read-only dataset copy.

    Refuses to reuse an existing directory: overwriting a work directory
    would silently mix artifacts across executions.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise FileNotFoundError(f"run directory does not exist: {run_dir}")
    target = run_dir / "work" / question_id / f"v{version_index}"
    if target.exists():
        raise FileExistsError(f"work directory already exists: {target}")
    target.mkdir(parents=True)
    dataset_copy = target / DATASET_NAME
    shutil.copyfile(dataset_path, dataset_copy)
    dataset_copy.chmod(stat.S_IRUSR | stat.S_IRGRP | stat.S_IROTH)
    return target


def default_worker_command() -> list[str]:
    return [sys.executable, "-m", "sandbox_runner"]


class SubprocessExecutor:
    """Runs each request through the out-of-process sandbox worker."""

    def __init__(self, command: list[str] | None = None):
        self.command = list(command) if command else default_worker_command()

    def run(self, request: ExecutionRequest) -> ExecutionOutput:
        doc = json.dumps(request.to_doc())
        try:
            proc = subprocess.run(
                self.command,
                input=doc.encode("utf-8"),
                capture_output=True,
                timeout=request.timeout_s + 30.0,  # worker enforces the real limit
            )
        except subprocess.TimeoutExpired:
            return ExecutionOutput(
                status="timeout",
                stdout="",
                stderr="sandbox worker did not respond within its grace period",
                wall_time_s=request.timeout_s + 30.0,
            )
        except OSError as exc:
            return ExecutionOutput(
                status="error", stdout="", stderr=f"failed to spawn sandbox worker: {exc}"
            )
        if proc.returncode != 0:
            return ExecutionOutput(
                status="error",
                stdout="",
                stderr="sandbox worker exited with "
                f"{proc.returncode}: {proc.stderr.decode('utf-8', 'replace')[-2000:]}",
            )
        try:
            return ExecutionOutput.from_doc(json.loads(proc.stdout.decode("utf-8")))
        except (ValueError, KeyError) as exc:
            return ExecutionOutput(
                status="error", stdout="", stderr=f"malformed worker response: {exc}"
            )


class ScriptedExecutor:
    """Deterministic in-process executor speaking the same protocol documents.

    With no scripted outcomes queued it fabricates a successful run: fixed
    stdout derived from the request and a canned plot file. Tests can queue
    explicit response documents to drive failure paths.
    """

    def __init__(self, outcomes: list[dict] | None = None, write_plot: bool = True):
        self._outcomes = list(outcomes or [])
        self.write_plot = write_plot
        self.requests: list[dict] = []

    def run(self, request: ExecutionRequest) -> ExecutionOutput:
        doc = request.to_doc()
        self.requests.append(doc)
        return ExecutionOutput.from_doc(self._respond(doc))

    def _respond(self, doc: dict) -> dict:
        if self._outcomes:
            response = dict(self._outcomes.pop(0))
            response.setdefault("schema", PROTOCOL_VERSION)
            for relative in response.pop("write_plots", []):
                path = Path(doc["work_dir"]) / relative
                path.write_bytes(TINY_PNG)
                response.setdefault("plot_paths", []).append(str(path))
            return response
        work_dir = Path(doc["work_dir"])
        plot_paths: list[str] = []
        if self.write_plot:
            plot = work_dir / PLOT_NAME
            plot.write_bytes(TINY_PNG)
            plot_paths.append(str(plot))
        import hashlib

        digest = hashlib.sha256(doc["code"].encode("utf-8")).hexdigest()[:8]
        stdout = f"rows=40 columns=5\nresult: aggregate check {digest} passed\n"
        return {
            "schema": PROTOCOL_VERSION,
            "status": "ok",
            "stdout": stdout,
            "stderr": "",
            "plot_paths": plot_paths,
            "wall_time_s": 0.0,
        }
