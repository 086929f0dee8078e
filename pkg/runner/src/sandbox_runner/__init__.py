"""Sandbox worker: executes one analysis script per process invocation.

Protocol: a JSON request document on stdin, a JSON response document on
stdout (schema ``sandbox-exec/1``). The worker confines the script to its
work directory, disables network access, forces a headless plotting
backend, enforces time and memory limits, and captures stdout, stderr,
and plot artifacts. All failure modes are encoded in the response status;
the worker itself exits non-zero only when the request is unusable.
"""

from .shim import run_script  # noqa: F401

PROTOCOL_VERSION = "sandbox-exec/1"
