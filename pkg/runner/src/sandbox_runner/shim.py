"""Execution core of the sandbox worker.

The incoming script is wrapped with a boot module that installs in-process
guards before any user code runs: builtins.open is fenced to the work
directory (reads additionally allow interpreter/library prefixes so imports
and font loading keep working), socket construction is disabled, and any
matplotlib figure save is redirected to the canonical plot path. These
guards make violations fail loudly inside the child; they are a containment
aid, not a security boundary, and OS-level jailing remains a deployment
concern.
"""

from __future__ import annotations

import json
import os
import signal
import subprocess
import sys
import time
from pathlib import Path

PROTOCOL_VERSION = "sandbox-exec/1"
BOOT_NAME = "_sandbox_boot.py"
MAIN_NAME = "_sandbox_main.py"
PLOT_NAME = "plot.png"
TRUNCATION_MARK = "\n[... stdout truncated by sandbox ...]\n"

BOOT_MODULE = '''\
"""Installed before user code; do not import from analysis scripts."""
import builtins as _builtins
import os as _os
import socket as _socket
import sys as _sys

_WORK = _os.path.realpath(_os.getcwd())
_ALLOWED_READ = [_WORK]
for _prefix in (_sys.prefix, _sys.base_prefix, _sys.exec_prefix,
                "/usr/lib", "/usr/local/lib", "/usr/share", "/etc"):
    _real = _os.path.realpath(_prefix)
    if _real not in _ALLOWED_READ:
        _ALLOWED_READ.append(_real)


def _inside(path, roots):
    return any(path == root or path.startswith(root + _os.sep) for root in roots)


_real_open = _builtins.open


def _guarded_open(file, mode="r", *args, **kwargs):
    if isinstance(file, int):
        return _real_open(file, mode, *args, **kwargs)
    try:
        raw = _os.fspath(file)
    except TypeError:
        return _real_open(file, mode, *args, **kwargs)
    if isinstance(raw, bytes):
        raw = raw.decode(errors="surrogateescape")
    real = _os.path.realpath(raw)
    writing = any(flag in str(mode) for flag in ("w", "a", "x", "+"))
    if writing and not _inside(real, [_WORK]):
        raise PermissionError(f"sandbox: write outside the work directory denied: {raw}")
    if not writing and not _inside(real, _ALLOWED_READ):
        raise PermissionError(f"sandbox: read outside the work directory denied: {raw}")
    return _real_open(file, mode, *args, **kwargs)


_builtins.open = _guarded_open


def _network_disabled(*args, **kwargs):
    raise OSError("sandbox: network access is disabled")


_socket.socket = _network_disabled
_socket.create_connection = _network_disabled
_socket.socketpair = _network_disabled
_socket.getaddrinfo = _network_disabled

try:
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.figure as _mfig

    _real_savefig = _mfig.Figure.savefig
    _PLOT_PATH = _os.path.join(_WORK, "plot.png")

    def _redirected_savefig(self, fname=None, *args, **kwargs):
        # every figure save lands on the canonical plot path
        return _real_savefig(self, _PLOT_PATH, *args, **kwargs)

    _mfig.Figure.savefig = _redirected_savefig
except ImportError:
    pass
'''


def _child_env(work_dir: Path) -> dict[str, str]:
    """Minimal environment: no credentials, no proxies, headless plotting."""
    mpl_dir = work_dir / ".mpl"
    mpl_dir.mkdir(exist_ok=True)
    return {
        "PATH": os.environ.get("PATH", "/usr/bin:/bin"),
        "HOME": str(work_dir),
        "TMPDIR": str(work_dir),
        "LANG": "C.UTF-8",
        "LC_ALL": "C.UTF-8",
        "PYTHONHASHSEED": "0",
        "MPLBACKEND": "Agg",
        "MPLCONFIGDIR": str(mpl_dir),
    }


def _limits_factory(memory_cap_bytes: int):
    def apply_limits():
        import resource

        if memory_cap_bytes > 0:
            resource.setrlimit(resource.RLIMIT_AS, (memory_cap_bytes, memory_cap_bytes))
        resource.setrlimit(resource.RLIMIT_CORE, (0, 0))

    return apply_limits


def _validate(request: dict) -> tuple[Path, float]:
    if request.get("schema") != PROTOCOL_VERSION:
        raise ValueError(f"unsupported request schema: {request.get('schema')!r}")
    work_dir = Path(request["work_dir"])
    if not work_dir.is_dir():
        raise ValueError(f"work directory does not exist: {work_dir}")
    timeout_s = float(request["timeout_s"])
    if timeout_s <= 0:
        raise ValueError("timeout_s must be positive")
    return work_dir, timeout_s


def run_script(request: dict) -> dict:
    """Execute one request document and return the response document."""
    work_dir, timeout_s = _validate(request)
    stdout_cap = int(request.get("stdout_cap", 64 * 1024))
    memory_cap = int(request.get("memory_cap_bytes", 0))

    (work_dir / BOOT_NAME).write_text(BOOT_MODULE, encoding="utf-8")
    (work_dir / MAIN_NAME).write_text(
        "import _sandbox_boot  # noqa: F401\n" + request["code"], encoding="utf-8"
    )

    started = time.monotonic()
    proc = subprocess.Popen(
        [sys.executable, MAIN_NAME],
        cwd=work_dir,
        env=_child_env(work_dir),
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        stdin=subprocess.DEVNULL,
        start_new_session=True,
        preexec_fn=_limits_factory(memory_cap),
    )
    timed_out = False
    try:
        raw_out, raw_err = proc.communicate(timeout=timeout_s)
    except subprocess.TimeoutExpired:
        timed_out = True
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        raw_out, raw_err = proc.communicate()
    wall_time = time.monotonic() - started

    stdout = raw_out.decode("utf-8", errors="replace")
    stderr = raw_err.decode("utf-8", errors="replace")
    if len(stdout) > stdout_cap:
        stdout = stdout[:stdout_cap] + TRUNCATION_MARK

    if timed_out:
        status = "timeout"
    elif proc.returncode == 0:
        status = "ok"
    else:
        status = "error"

    plot_paths = sorted(
        str(p) for p in work_dir.glob("*.png") if p.is_file()
    )
    return {
        "schema": PROTOCOL_VERSION,
        "status": status,
        "stdout": stdout,
        "stderr": stderr,
        "plot_paths": plot_paths,
        "wall_time_s": round(wall_time, 3),
    }


def main() -> int:
    try:
        request = json.loads(sys.stdin.read())
        response = run_script(request)
    except (ValueError, KeyError, OSError) as exc:
        print(f"sandbox worker: unusable request: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(json.dumps(response))
    return 0
