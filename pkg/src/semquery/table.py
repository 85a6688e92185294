"""In-memory columnar table with typed columns, descriptors, and provenance.

Tables are immutable snapshots: every mutation returns a new table value and
shares unchanged column storage with its predecessor. Each column carries a
human-readable description (used for semantic matching) and a provenance
fingerprint (used to detect when a planned annotation already exists).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping

Value = str | int | float | bool | None

KINDS = ("text", "integer", "real", "boolean")


class TableError(Exception):
    """Raised for table construction and ingestion failures."""


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class Provenance:
    """Where a column's cells came from.

    origin is a canonical nested structure:
      ("user", source_name, column_name)                      for loaded data
      ("derived", function_id, version, (input_fp, ...))      for annotations
    The fingerprint is a stable hash of the origin, so equal derivations
    always collide and differing function ids or input orders never do.
    """

    origin: tuple
    fingerprint: str

    @staticmethod
    def user_source(source_name: str, column_name: str) -> "Provenance":
        origin = ("user", source_name, column_name)
        return Provenance(origin, _fingerprint(origin))

    @staticmethod
    def derived(function_id: str, version: str, input_fingerprints: Iterable[str]) -> "Provenance":
        origin = ("derived", function_id, version, tuple(input_fingerprints))
        return Provenance(origin, _fingerprint(origin))


def _fingerprint(origin: tuple) -> str:
    def encode(node):
        if isinstance(node, tuple):
            return [encode(item) for item in node]
        return node

    return hashlib.sha256(_canonical(encode(origin)).encode("utf-8")).hexdigest()[:32]


@dataclass(frozen=True)
class ColumnDescriptor:
    id: str
    name: str
    description: str
    kind: str
    provenance: Provenance
    aliased_from: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise TableError(f"unknown column kind {self.kind!r}")
        if not self.description.strip():
            raise TableError(f"column {self.name!r} has an empty description")


def _check_cell(kind: str, value: Value) -> Value:
    if value is None:
        return None
    if kind == "text":
        if isinstance(value, str):
            return value
    elif kind == "integer":
        if isinstance(value, bool):
            raise TableError("boolean cell in integer column")
        if isinstance(value, int):
            return value
    elif kind == "real":
        if isinstance(value, bool):
            raise TableError("boolean cell in real column")
        if isinstance(value, (int, float)):
            return float(value)
    elif kind == "boolean":
        if isinstance(value, bool):
            return value
    raise TableError(f"cell {value!r} does not fit column kind {kind!r}")


class Table:
    """Ordered columns over shared cell storage.

    Aliased columns point at the same storage tuple as their target, so no
    cells are copied and reads through either name are identical.
    """

    def __init__(self, columns: tuple[ColumnDescriptor, ...], cells: dict[str, tuple[Value, ...]], row_count: int, next_column_ordinal: int):
        self.columns = columns
        self._cells = cells
        self.row_count = row_count
        self._next_ordinal = next_column_ordinal

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, ref: str) -> ColumnDescriptor:
        """Look up a descriptor by column id or name."""
        for descriptor in self.columns:
            if descriptor.id == ref or descriptor.name == ref:
                return descriptor
        raise TableError(f"no column {ref!r}")

    def has_column(self, ref: str) -> bool:
        return any(c.id == ref or c.name == ref for c in self.columns)

    def cells(self, ref: str) -> tuple[Value, ...]:
        return self._cells[self.column(ref).id]

    def rows(self) -> Iterator[tuple[Value, ...]]:
        stores = [self._cells[c.id] for c in self.columns]
        for i in range(self.row_count):
            yield tuple(store[i] for store in stores)

    def _fresh_id(self) -> str:
        return f"c{self._next_ordinal}"

    def add_column(self, name: str, description: str, kind: str, provenance: Provenance, cells: list[Value] | tuple[Value, ...]) -> "Table":
        # The first column fixes the row count for the table's lifetime.
        row_count = len(cells) if not self.columns else self.row_count
        if len(cells) != row_count:
            raise TableError(
                f"length mismatch: column {name!r} has {len(cells)} cells for {row_count} rows"
            )
        if self.has_column(name):
            raise TableError(f"duplicate name: column {name!r} already exists")
        descriptor = ColumnDescriptor(self._fresh_id(), name, description, kind, provenance)
        checked = tuple(_check_cell(kind, v) for v in cells)
        new_cells = dict(self._cells)
        new_cells[descriptor.id] = checked
        return Table(self.columns + (descriptor,), new_cells, row_count, self._next_ordinal + 1)

    def alias_column(self, existing: str, alias_name: str, alias_description: str) -> "Table":
        """Register a new descriptor over an existing column's storage.

        The alias keeps the target's provenance, so derivations reading
        through the alias cite the original column's fingerprint.
        """
        target = self.column(existing)
        if self.has_column(alias_name):
            raise TableError(f"duplicate name: column {alias_name!r} already exists")
        descriptor = ColumnDescriptor(
            self._fresh_id(),
            alias_name,
            alias_description,
            target.kind,
            target.provenance,
            aliased_from=target.id,
        )
        new_cells = dict(self._cells)
        new_cells[descriptor.id] = self._cells[target.id]
        return Table(self.columns + (descriptor,), new_cells, self.row_count, self._next_ordinal + 1)

    def schema_summary(self, sample_rows: int = 0) -> str:
        """Deterministic plain-text rendering of descriptors plus sample values."""
        if sample_rows < 0:
            raise TableError("sample_rows must be >= 0")
        lines = ["columns:"]
        for descriptor in self.columns:
            line = f"- {descriptor.name} ({descriptor.kind}): {descriptor.description}"
            if descriptor.aliased_from is not None:
                line += f" [alias of {self.column(descriptor.aliased_from).name}]"
            lines.append(line)
            n = min(sample_rows, self.row_count)
            if n:
                samples = ", ".join(_render_value(v) for v in self._cells[descriptor.id][:n])
                lines.append(f"  samples: {samples}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.column_names)
        for row in self.rows():
            writer.writerow(["" if v is None else v for v in row])
        return buf.getvalue()


def _render_value(value: Value) -> str:
    if value is None:
        return "NULL"
    return json.dumps(value, ensure_ascii=False)


def empty_table() -> Table:
    return Table((), {}, 0, 1)


def _slug(text: str) -> str:
    slug = re.sub(r"[^0-9a-zA-Z]+", "_", text.strip()).strip("_").lower()
    return slug or "column"


def _infer_kind(raw: list[str]) -> str:
    present = [v for v in raw if v != ""]
    if not present:
        return "text"
    if all(re.fullmatch(r"[+-]?\d+", v) for v in present):
        return "integer"
    if all(re.fullmatch(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?", v) for v in present):
        return "real"
    if all(v.lower() in ("true", "false") for v in present):
        return "boolean"
    return "text"


def _coerce(kind: str, raw: str) -> Value:
    if raw == "":
        return None
    if kind == "integer":
        return int(raw)
    if kind == "real":
        return float(raw)
    if kind == "boolean":
        return raw.lower() == "true"
    return raw


def load_data(source: str | Path, description: str | Mapping[str, str]) -> Table:
    """Load a data source into a table.

    Line-delimited text (or a single-column CSV) becomes one text column whose
    description is the given string. A multi-column CSV needs a header and a
    mapping from each header name to its description; cell kinds are inferred
    per column (empty fields load as nulls).
    """
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise TableError(f"unreadable source {path}: {exc}") from exc
    if not text.strip():
        raise TableError(f"empty source: {path}")

    if path.suffix.lower() == ".csv":
        return _load_csv(path, text, description)
    if not isinstance(description, str):
        raise TableError("line-delimited sources take a single text description")
    lines = text.splitlines()
    name = _slug(description)
    return empty_table().add_column(
        name, description, "text", Provenance.user_source(path.name, name), lines
    )


def _load_csv(path: Path, text: str, description: str | Mapping[str, str]) -> Table:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if not rows:
        raise TableError(f"empty source: {path}")
    header = rows[0]
    data = rows[1:]
    if len(header) == 1:
        if not isinstance(description, str):
            raise TableError("single-column sources take a single text description")
        descriptions = {header[0]: description}
    else:
        if isinstance(description, str):
            raise TableError(
                f"multi-column source {path.name} needs a header-to-description mapping"
            )
        missing = [h for h in header if h not in description]
        extra = [k for k in description if k not in header]
        if missing or extra:
            raise TableError(
                f"header/description mismatch for {path.name}: "
                f"missing {missing or 'none'}, unknown {extra or 'none'}"
            )
        descriptions = dict(description)
    if not data:
        raise TableError(f"empty source: {path} has a header but no rows")
    for i, row in enumerate(data):
        if len(row) != len(header):
            raise TableError(f"{path.name}: row {i + 2} has {len(row)} fields, expected {len(header)}")

    table = empty_table()
    for col_idx, name in enumerate(header):
        raw = [row[col_idx] for row in data]
        kind = _infer_kind(raw)
        cells = [_coerce(kind, v) for v in raw]
        table = table.add_column(
            name, descriptions[name], kind, Provenance.user_source(path.name, name), cells
        )
    return table
