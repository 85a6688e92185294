"""Row-wise annotation executors behind a common batch contract.

Every executor takes the bound input cells for a batch of rows and must
return exactly one output value per row, in row order. Stubs are pure lookup
tables, commands speak a line-per-row stdin/stdout protocol, and HTTP
executors send one request per batch.
"""

from __future__ import annotations

import subprocess

import httpx

from .registry import (
    CommandExecutorSpec,
    ExecutorSpec,
    FunctionSpec,
    HttpExecutorSpec,
    StubExecutorSpec,
)
from .table import Value


class ExecutionFailure(Exception):
    """Annotation executor failure; carries the offending row when known."""

    def __init__(self, message: str, row_index: int | None = None):
        self.row_index = row_index
        super().__init__(message if row_index is None else f"row {row_index}: {message}")


def _coerce_output(kind: str, raw: str, row_index: int) -> Value:
    raw = raw.strip()
    if raw == "":
        return None
    try:
        if kind == "integer":
            return int(raw)
        if kind == "real":
            return float(raw)
        if kind == "boolean":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError as exc:
        raise ExecutionFailure(f"output {raw!r} is not a valid {kind}", row_index) from exc


def _render_input(value: Value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def run_executor(spec: FunctionSpec, batches: list[tuple[Value, ...]]) -> list[Value]:
    """Run a function's executor over bound input rows; one output per row."""
    raw = _dispatch(spec.executor, batches)
    if len(raw) != len(batches):
        raise ExecutionFailure(
            f"output length mismatch: got {len(raw)} outputs for {len(batches)} rows"
        )
    return [_coerce_output(spec.output.kind, value, i) for i, value in enumerate(raw)]


def _dispatch(executor: ExecutorSpec, batches: list[tuple[Value, ...]]) -> list[str]:
    if isinstance(executor, StubExecutorSpec):
        return _run_stub(executor, batches)
    if isinstance(executor, CommandExecutorSpec):
        return _run_command(executor, batches)
    if isinstance(executor, HttpExecutorSpec):
        return _run_http(executor, batches)
    raise ExecutionFailure(f"unknown executor {executor!r}")


def _run_stub(executor: StubExecutorSpec, batches: list[tuple[Value, ...]]) -> list[str]:
    outputs = []
    for row in batches:
        joined = "\t".join(_render_input(v) for v in row).casefold()
        for pattern, output in executor.rules:
            if pattern.casefold() in joined:
                outputs.append(output)
                break
        else:
            outputs.append(executor.default)
    return outputs


def _run_command(executor: CommandExecutorSpec, batches: list[tuple[Value, ...]]) -> list[str]:
    stdin = "\n".join("\t".join(_render_input(v) for v in row) for row in batches)
    try:
        proc = subprocess.run(
            list(executor.argv),
            input=stdin + "\n" if stdin else "",
            capture_output=True,
            text=True,
            timeout=120,
        )
    except (OSError, subprocess.TimeoutExpired) as exc:
        raise ExecutionFailure(f"command failed to run: {exc}") from exc
    if proc.returncode != 0:
        raise ExecutionFailure(
            f"command exited with {proc.returncode}: {proc.stderr.strip()[:200]}"
        )
    return proc.stdout.splitlines()


def _run_http(executor: HttpExecutorSpec, batches: list[tuple[Value, ...]]) -> list[str]:
    body = {executor.request_field: [[_render_input(v) for v in row] for row in batches]}
    try:
        response = httpx.post(executor.endpoint, json=body, timeout=120)
    except httpx.HTTPError as exc:
        raise ExecutionFailure(f"http executor failed: {exc}") from exc
    if response.status_code != 200:
        raise ExecutionFailure(f"http executor returned {response.status_code}")
    doc = response.json()
    outputs = doc.get(executor.response_field)
    if not isinstance(outputs, list):
        raise ExecutionFailure(f"http executor response missing {executor.response_field!r}")
    return [str(v) for v in outputs]
