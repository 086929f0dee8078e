from __future__ import annotations

import json
import subprocess
import sys
import time
from pathlib import Path

import pytest

from sandbox_runner.shim import PROTOCOL_VERSION, run_script

DATA = "region,units\nnorth,12\nsouth,7\n"


@pytest.fixture
def work_dir(tmp_path: Path) -> Path:
    work = tmp_path / "work"
    work.mkdir()
    (work / "data.csv").write_text(DATA, encoding="utf-8")
    return work


def make_request(work_dir: Path, code: str, timeout_s: float = 60.0, **extra) -> dict:
    doc = {
        "schema": PROTOCOL_VERSION,
        "code": code,
        "work_dir": str(work_dir),
        "dataset_path": str(work_dir / "data.csv"),
        "timeout_s": timeout_s,
        "memory_cap_bytes": 2 * 1024 * 1024 * 1024,
        "stdout_cap": 64 * 1024,
    }
    doc.update(extra)
    return doc


PLOT_SCRIPT = """\
import pandas as pd
import matplotlib.pyplot as plt

df = pd.read_csv("data.csv")
print("sentinel-42")
print(f"rows={len(df)}")
ax = df.plot(kind="bar", x="region", y="units", title="Units by region")
ax.set_ylabel("units")
plt.tight_layout()
plt.savefig("plot.png")
"""


def test_sentinel_and_plot_captured(work_dir):
    response = run_script(make_request(work_dir, PLOT_SCRIPT))
    assert response["status"] == "ok"
    assert "sentinel-42" in response["stdout"]
    assert len(response["plot_paths"]) == 1
    assert Path(response["plot_paths"][0]).name == "plot.png"
    assert Path(response["plot_paths"][0]).stat().st_size > 0


def test_savefig_redirected_to_canonical_path(work_dir):
    code = PLOT_SCRIPT.replace('plt.savefig("plot.png")', 'plt.savefig("elsewhere.png")')
    response = run_script(make_request(work_dir, code))
    assert response["status"] == "ok"
    names = {Path(p).name for p in response["plot_paths"]}
    assert names == {"plot.png"}


def test_infinite_loop_times_out(work_dir):
    started = time.monotonic()
    response = run_script(
        make_request(work_dir, "while True:\n    pass\n", timeout_s=5.0)
    )
    elapsed = time.monotonic() - started
    assert response["status"] == "timeout"
    assert response["wall_time_s"] >= 5.0
    assert elapsed < 10.0


def test_crash_reports_stderr(work_dir):
    response = run_script(
        make_request(work_dir, "raise RuntimeError('bad aggregation')")
    )
    assert response["status"] == "error"
    assert "bad aggregation" in response["stderr"]
    assert response["plot_paths"] == []


def test_write_outside_work_dir_fails_visibly(work_dir, tmp_path):
    outside = tmp_path / "forbidden.txt"
    code = f"open({str(outside)!r}, 'w').write('x')\n"
    response = run_script(make_request(work_dir, code))
    assert response["status"] == "error"
    assert "write outside the work directory" in response["stderr"]
    assert not outside.exists()


def test_read_outside_work_dir_fails_visibly(work_dir, tmp_path):
    secret = tmp_path / "secret.txt"
    secret.write_text("k", encoding="utf-8")
    code = f"print(open({str(secret)!r}).read())\n"
    response = run_script(make_request(work_dir, code))
    assert response["status"] == "error"
    assert "read outside the work directory" in response["stderr"]


def test_reads_inside_work_dir_allowed(work_dir):
    response = run_script(
        make_request(work_dir, "print(open('data.csv').read().splitlines()[0])")
    )
    assert response["status"] == "ok"
    assert "region,units" in response["stdout"]


def test_network_access_fails_visibly(work_dir):
    code = "import socket\nsocket.create_connection(('example.org', 80), timeout=2)\n"
    response = run_script(make_request(work_dir, code))
    assert response["status"] == "error"
    assert "network access is disabled" in response["stderr"]


def test_urllib_is_blocked_too(work_dir):
    code = (
        "import urllib.request\n"
        "urllib.request.urlopen('http://example.org', timeout=2)\n"
    )
    response = run_script(make_request(work_dir, code))
    assert response["status"] == "error"


def test_stdout_truncated_at_cap(work_dir):
    code = "print('x' * 100)\n" * 200
    response = run_script(make_request(work_dir, code, stdout_cap=1000))
    assert response["status"] == "ok"
    assert "truncated by sandbox" in response["stdout"]
    assert len(response["stdout"]) < 1200


def test_identical_scripts_identical_stdout(work_dir, tmp_path):
    other = tmp_path / "work2"
    other.mkdir()
    (other / "data.csv").write_text(DATA, encoding="utf-8")
    code = "import pandas as pd\nprint(pd.read_csv('data.csv')['units'].sum())\n"
    first = run_script(make_request(work_dir, code))
    second = run_script(make_request(other, code))
    assert first["status"] == second["status"] == "ok"
    assert first["stdout"] == second["stdout"]


def test_rejects_wrong_schema(work_dir):
    with pytest.raises(ValueError):
        run_script(make_request(work_dir, "print(1)", schema="bogus/0"))


def test_rejects_missing_work_dir(tmp_path):
    request = make_request(tmp_path / "missing", "print(1)")
    with pytest.raises(ValueError):
        run_script(request)


# -- the real process boundary ---------------------------------------------------


def invoke_worker(request: dict) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "sandbox_runner"],
        input=json.dumps(request).encode("utf-8"),
        capture_output=True,
        timeout=120,
    )


def test_protocol_over_stdin_stdout(work_dir):
    proc = invoke_worker(make_request(work_dir, "print('through the pipe')"))
    assert proc.returncode == 0
    response = json.loads(proc.stdout.decode("utf-8"))
    assert response["schema"] == PROTOCOL_VERSION
    assert response["status"] == "ok"
    assert "through the pipe" in response["stdout"]


def test_worker_exits_nonzero_on_garbage_request():
    proc = subprocess.run(
        [sys.executable, "-m", "sandbox_runner"],
        input=b"this is not json",
        capture_output=True,
        timeout=60,
    )
    assert proc.returncode == 2
    assert b"unusable request" in proc.stderr
