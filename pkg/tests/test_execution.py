from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import pytest

from insightloop.execution import (
    PROTOCOL_VERSION,
    ExecutionOutput,
    ExecutionRequest,
    ScriptedExecutor,
    SubprocessExecutor,
    prepare_workdir,
)


def make_request(work_dir: Path, dataset: Path, code: str = "print('hi')") -> ExecutionRequest:
    return ExecutionRequest(
        code=code, work_dir=work_dir, dataset_path=dataset, timeout_s=10.0
    )


# -- workdir preparation ------------------------------------------------------


def test_prepare_workdir_contains_only_dataset(tmp_path, sales_csv):
    work = prepare_workdir(tmp_path, "q-001", 0, sales_csv)
    assert work.is_dir()
    assert [p.name for p in work.iterdir()] == ["data.csv"]
    assert (work / "data.csv").read_bytes() == sales_csv.read_bytes()


def test_prepare_workdir_dataset_is_read_only(tmp_path, sales_csv):
    work = prepare_workdir(tmp_path, "q-001", 0, sales_csv)
    mode = (work / "data.csv").stat().st_mode
    assert not mode & 0o222


def test_prepare_workdir_refuses_overwrite(tmp_path, sales_csv):
    prepare_workdir(tmp_path, "q-001", 0, sales_csv)
    with pytest.raises(FileExistsError):
        prepare_workdir(tmp_path, "q-001", 0, sales_csv)
    # a different version index is fine
    prepare_workdir(tmp_path, "q-001", 1, sales_csv)


def test_prepare_workdir_requires_existing_run_dir(tmp_path, sales_csv):
    with pytest.raises(FileNotFoundError):
        prepare_workdir(tmp_path / "missing", "q-001", 0, sales_csv)


def test_workdirs_are_unique_per_question_and_version(tmp_path, sales_csv):
    a = prepare_workdir(tmp_path, "q-001", 0, sales_csv)
    b = prepare_workdir(tmp_path, "q-002", 0, sales_csv)
    assert a != b


# -- protocol documents ---------------------------------------------------------


def test_request_round_trips_through_doc(tmp_path, sales_csv):
    request = make_request(tmp_path, sales_csv)
    doc = request.to_doc()
    assert doc["schema"] == PROTOCOL_VERSION
    assert json.loads(json.dumps(doc)) == doc


def test_output_doc_round_trip():
    output = ExecutionOutput(status="ok", stdout="s", stderr="", plot_paths=[], wall_time_s=1.5)
    assert ExecutionOutput.from_doc(output.to_doc()) == output


def test_output_rejects_unknown_schema():
    with pytest.raises(ValueError):
        ExecutionOutput.from_doc({"schema": "bogus/9", "status": "ok"})


def test_output_rejects_unknown_status():
    with pytest.raises(ValueError):
        ExecutionOutput.from_doc({"schema": PROTOCOL_VERSION, "status": "maybe"})


def test_timeout_must_be_positive(tmp_path, sales_csv):
    with pytest.raises(ValueError):
        ExecutionRequest(code="x", work_dir=tmp_path, dataset_path=sales_csv, timeout_s=0)


# -- scripted executor ------------------------------------------------------------


def test_scripted_executor_default_success(tmp_path, sales_csv):
    work = prepare_workdir(tmp_path, "q-001", 0, sales_csv)
    executor = ScriptedExecutor()
    output = executor.run(make_request(work, sales_csv))
    assert output.status == "ok"
    assert (work / "plot.png").is_file()
    assert output.plot_paths == [work / "plot.png"]
    assert executor.requests[0]["schema"] == PROTOCOL_VERSION


def test_scripted_executor_is_deterministic(tmp_path, sales_csv):
    w1 = prepare_workdir(tmp_path, "q-001", 0, sales_csv)
    w2 = prepare_workdir(tmp_path, "q-001", 1, sales_csv)
    out1 = ScriptedExecutor().run(make_request(w1, sales_csv, code="same code"))
    out2 = ScriptedExecutor().run(make_request(w2, sales_csv, code="same code"))
    assert out1.stdout == out2.stdout


def test_scripted_executor_queued_outcomes(tmp_path, sales_csv):
    work = prepare_workdir(tmp_path, "q-001", 0, sales_csv)
    executor = ScriptedExecutor(
        outcomes=[
            {"status": "error", "stdout": "", "stderr": "boom", "plot_paths": []},
            {"status": "timeout", "stdout": "", "stderr": "", "plot_paths": [],
             "wall_time_s": 9.0},
        ]
    )
    first = executor.run(make_request(work, sales_csv))
    assert (first.status, first.stderr) == ("error", "boom")
    second = executor.run(make_request(work, sales_csv))
    assert second.status == "timeout"
    assert second.wall_time_s == 9.0


# -- subprocess executor against a minimal protocol shim ---------------------------

FAKE_SHIM = """\
import json, sys
request = json.loads(sys.stdin.read())
response = {
    "schema": "sandbox-exec/1",
    "status": "ok",
    "stdout": "echo:" + request["code"],
    "stderr": "",
    "plot_paths": [],
    "wall_time_s": 0.01,
}
sys.stdout.write(json.dumps(response))
"""


def test_subprocess_executor_speaks_protocol(tmp_path, sales_csv):
    shim = tmp_path / "shim.py"
    shim.write_text(FAKE_SHIM, encoding="utf-8")
    work = prepare_workdir(tmp_path, "q-001", 0, sales_csv)
    executor = SubprocessExecutor(command=[sys.executable, str(shim)])
    output = executor.run(make_request(work, sales_csv, code="42"))
    assert output.status == "ok"
    assert output.stdout == "echo:42"


def test_subprocess_executor_encodes_worker_crash(tmp_path, sales_csv):
    shim = tmp_path / "shim.py"
    shim.write_text("import sys; sys.exit(3)", encoding="utf-8")
    work = prepare_workdir(tmp_path, "q-001", 0, sales_csv)
    executor = SubprocessExecutor(command=[sys.executable, str(shim)])
    output = executor.run(make_request(work, sales_csv))
    assert output.status == "error"
    assert "exited with 3" in output.stderr


def test_subprocess_executor_encodes_bad_response(tmp_path, sales_csv):
    shim = tmp_path / "shim.py"
    shim.write_text("print('not json')", encoding="utf-8")
    work = prepare_workdir(tmp_path, "q-001", 0, sales_csv)
    executor = SubprocessExecutor(command=[sys.executable, str(shim)])
    output = executor.run(make_request(work, sales_csv))
    assert output.status == "error"
    assert "malformed worker response" in output.stderr


def test_subprocess_executor_missing_command(tmp_path, sales_csv):
    work = prepare_workdir(tmp_path, "q-001", 0, sales_csv)
    executor = SubprocessExecutor(command=["/nonexistent/worker-binary"])
    output = executor.run(make_request(work, sales_csv))
    assert output.status == "error"
    assert "spawn" in output.stderr
