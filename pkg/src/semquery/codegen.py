"""Code generation and execution over the completed table.

The gateway translates the query plus the table schema into dialect SQL.
Unspecified numeric criteria arrive as @NAME@ placeholders and are resolved
from the column's data distribution before execution; every resolution is
disclosed in the result metadata so users can audit the chosen values.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field

from .gateway import CompletionRequest, Gateway, encode_payload
from .sqlrun import (
    ColumnRef,
    Comparison,
    PlaceholderRef,
    QueryOutput,
    SelectQuery,
    SqlParseError,
    parse_sql,
    run_query,
)
from .table import Table, Value


class CodegenError(Exception):
    """Stage-level code generation or placeholder resolution failure."""


@dataclass(frozen=True)
class PlaceholderSpec:
    name: str
    column: str
    direction: str  # "upper" for > / >=, "lower" for < / <=


@dataclass(frozen=True)
class Resolution:
    value: float
    note: str


@dataclass
class GeneratedCode:
    sql: str
    placeholders: tuple[PlaceholderSpec, ...] = ()
    resolved: dict[str, Resolution] = field(default_factory=dict)

    @property
    def ready(self) -> bool:
        return all(p.name in self.resolved for p in self.placeholders)


@dataclass
class ExecutionResult:
    columns: list[tuple[str, str]]
    rows: list[tuple[Value, ...]]
    scalar: Value = None
    is_scalar: bool = False
    metadata: dict = field(default_factory=dict)
    elapsed_ms: float = 0.0


def _columns_payload(table: Table) -> list[dict]:
    return [
        {"name": c.name, "description": c.description, "kind": c.kind} for c in table.columns
    ]


def generate_code(
    query: str,
    table: Table,
    gateway: Gateway,
    unspecified_columns: tuple[str, ...] = (),
    sample_rows: int = 3,
    previous_error: str | None = None,
) -> GeneratedCode:
    """Ask the gateway for dialect SQL; one regenerate attempt on parse failure."""
    for column in unspecified_columns:
        if not table.has_column(column):
            raise CodegenError(
                f"unspecified numeric criterion {column!r} does not name a table column"
            )
    payload = {
        "task": "generate_sql",
        "query": query,
        "columns": _columns_payload(table),
        "schema": table.schema_summary(sample_rows),
        "unspecified_columns": list(unspecified_columns),
        "table_name": "table",
        "previous_error": previous_error,
    }
    request = CompletionRequest(
        stage_tag="code-gen",
        system_text=(
            "Translate the query into the supported SQL dialect over the single "
            "table named 'table'. Write any unspecified numeric criterion as a "
            "@NAME@ placeholder."
        ),
        user_text=encode_payload("Generate SQL for this query.", payload),
    )
    last_error = None
    for attempt in range(2):
        response = gateway.complete(request)
        sql = (response.content or "").strip().rstrip(";")
        try:
            parsed = parse_sql(sql)
        except SqlParseError as exc:
            last_error = exc
            request = CompletionRequest(
                stage_tag=request.stage_tag,
                system_text=request.system_text,
                user_text=request.user_text + f"\nnote: the previous SQL failed to parse ({exc}).",
            )
            continue
        return GeneratedCode(sql, _placeholder_specs(parsed, sql))
    raise CodegenError(f"generated SQL failed to parse twice: {last_error}")


def _placeholder_specs(parsed: SelectQuery, sql: str) -> tuple[PlaceholderSpec, ...]:
    specs: dict[str, PlaceholderSpec] = {}

    def visit(node):
        if isinstance(node, Comparison):
            left, right = node.left, node.right
            placeholder = None
            column = None
            flipped = False
            if isinstance(right, PlaceholderRef):
                placeholder = right
                column = left
            elif isinstance(left, PlaceholderRef):
                placeholder = left
                column = right
                flipped = True
            if placeholder is None:
                return
            if not isinstance(column, ColumnRef):
                raise CodegenError(
                    f"placeholder @{placeholder.name}@ must be compared against a column"
                )
            op = node.op
            if op in ("=", "<>"):
                raise CodegenError(
                    f"placeholder @{placeholder.name}@ needs an ordering comparison"
                )
            greater = op in (">", ">=")
            if flipped:
                greater = not greater
            direction = "upper" if greater else "lower"
            specs[placeholder.name] = PlaceholderSpec(placeholder.name, column.name, direction)
        elif hasattr(node, "items"):
            for item in node.items:
                visit(item)
        elif hasattr(node, "inner"):
            visit(node.inner)

    if parsed.where is not None:
        visit(parsed.where)
    names_in_sql = {p.name for p in parsed.placeholders()}
    missing = names_in_sql - set(specs)
    if missing:
        raise CodegenError(f"placeholders {sorted(missing)} are not column comparisons")
    return tuple(specs.values())


def _sql_number(value: float) -> str:
    text = repr(float(value))
    if "e" in text or "E" in text:
        text = f"{value:.17f}".rstrip("0")
        if text.endswith("."):
            text += "0"
    return text


def _quantile(values: list[float], q: float) -> float:
    ordered = sorted(values)
    if len(ordered) == 1:
        return float(ordered[0])
    h = (len(ordered) - 1) * q
    lo = math.floor(h)
    hi = math.ceil(h)
    if lo == hi:
        return float(ordered[int(h)])
    return float(ordered[lo] + (ordered[hi] - ordered[lo]) * (h - lo))


def resolve_placeholders(
    code: GeneratedCode, table: Table, quantiles: tuple[float, float] = (0.9, 0.1)
) -> GeneratedCode:
    """Fill placeholders from the data distribution.

    Ordering criteria default to the configured quantile of the referenced
    column: the upper quantile for > / >= comparisons, the lower for < / <=.
    """
    if not code.placeholders:
        return code
    sql = code.sql
    resolved: dict[str, Resolution] = {}
    for spec in code.placeholders:
        descriptor = table.column(spec.column)
        if descriptor.kind not in ("integer", "real"):
            raise CodegenError(
                f"placeholder @{spec.name}@ references non-numeric column {spec.column!r}"
            )
        values = [float(v) for v in table.cells(spec.column) if v is not None]
        if not values:
            raise CodegenError(
                f"placeholder @{spec.name}@ references all-null column {spec.column!r}"
            )
        q = quantiles[0] if spec.direction == "upper" else quantiles[1]
        value = _quantile(values, q)
        note = (
            f"{q:g} quantile of column '{spec.column}' "
            f"({'greater-than' if spec.direction == 'upper' else 'less-than'} comparison)"
        )
        resolved[spec.name] = Resolution(value, note)
        sql = sql.replace(f"@{spec.name}@", _sql_number(value))
    try:
        parse_sql(sql)
    except SqlParseError as exc:
        raise CodegenError(f"resolved SQL failed to parse: {exc}") from exc
    return GeneratedCode(sql, code.placeholders, resolved)


def execute_sql(code: GeneratedCode | str, table: Table) -> ExecutionResult:
    """Run dialect SQL over the table and package the outcome with metadata."""
    generated = GeneratedCode(code) if isinstance(code, str) else code
    if not generated.ready:
        raise CodegenError("placeholders must be resolved before execution")
    started = time.perf_counter()
    output: QueryOutput = run_query(generated.sql, table)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    metadata = {
        "sql": generated.sql,
        "placeholder_resolutions": {
            name: {"value": resolution.value, "note": resolution.note}
            for name, resolution in sorted(generated.resolved.items())
        },
    }
    return ExecutionResult(
        columns=output.columns,
        rows=output.rows,
        scalar=output.scalar,
        is_scalar=output.is_scalar,
        metadata=metadata,
        elapsed_ms=elapsed_ms,
    )


def result_as_dict(result: ExecutionResult) -> dict:
    doc = {
        "columns": [{"name": name, "kind": kind} for name, kind in result.columns],
        "rows": [list(row) for row in result.rows],
        "metadata": result.metadata,
    }
    if result.is_scalar:
        doc["scalar"] = result.scalar
    return doc


def result_to_json(result: ExecutionResult) -> str:
    return json.dumps(result_as_dict(result), indent=2, ensure_ascii=False) + "\n"


def result_to_csv(result: ExecutionResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([name for name, _ in result.columns])
    for row in result.rows:
        writer.writerow(["" if v is None else v for v in row])
    return buf.getvalue()
