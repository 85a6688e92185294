"""Annotation function registry: metadata, dependency links, and the tree.

The registry holds every annotation function (built-ins plus user-defined
ones), keeps bidirectional dependency links between functions whose execution
order is constrained, and groups functions into a category tree. Only a
leaf's members (plus the chain stopper and the planned call's linked
functions) are ever offered as tool-call candidates, which bounds prompt
size.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

# Sentinel candidate whose selection ends the annotation loop. It is injected
# into every leaf at build time and is not a registered function.
STOPPER_ID = "finish_table"
STOPPER_DESCRIPTION = "Stop annotating: the table already holds the information needed."


class RegistryError(Exception):
    """Raised for invalid function metadata or dependency structure."""


@dataclass(frozen=True)
class InputSpec:
    name: str
    expects: str  # description pattern matched against column descriptions
    kind: str


@dataclass(frozen=True)
class OutputSpec:
    column: str
    description: str  # may contain {param} slots filled with bound column names
    kind: str


@dataclass(frozen=True)
class StubExecutorSpec:
    """Lookup-table executor: first substring rule wins, default is total."""

    rules: tuple[tuple[str, str], ...]
    default: str


@dataclass(frozen=True)
class CommandExecutorSpec:
    """Line-per-row subprocess contract: rows on stdin, outputs on stdout."""

    argv: tuple[str, ...]


@dataclass(frozen=True)
class HttpExecutorSpec:
    """One request per batch: arrays of inputs in, array of outputs back."""

    endpoint: str
    request_field: str = "inputs"
    response_field: str = "outputs"


ExecutorSpec = StubExecutorSpec | CommandExecutorSpec | HttpExecutorSpec


@dataclass(frozen=True)
class FunctionSpec:
    id: str
    display_name: str
    description: str
    category_path: tuple[str, ...]
    inputs: tuple[InputSpec, ...]
    output: OutputSpec
    executor: ExecutorSpec
    trigger_hints: tuple[str, ...] = ()
    version: str = "1"

    def __post_init__(self):
        if not self.inputs:
            raise RegistryError(f"function {self.id!r} declares no inputs")
        if not self.category_path:
            raise RegistryError(f"function {self.id!r} has an empty category path")


@dataclass(frozen=True)
class DependencyLink:
    provider: str  # the provider's output feeds the consumer
    consumer: str


@dataclass
class TreeNode:
    name: str
    description: str
    children: "list[TreeNode | TreeLeaf]" = field(default_factory=list)


@dataclass
class TreeLeaf:
    name: str
    path: tuple[str, ...]
    function_ids: tuple[str, ...]
    stopper: str = STOPPER_ID


@dataclass
class FunctionTree:
    root: TreeNode | TreeLeaf

    def leaves(self) -> list[TreeLeaf]:
        found: list[TreeLeaf] = []

        def walk(node):
            if isinstance(node, TreeLeaf):
                found.append(node)
            else:
                for child in node.children:
                    walk(child)

        walk(self.root)
        return found

    def leaf_for(self, function_id: str) -> TreeLeaf:
        for leaf in self.leaves():
            if function_id in leaf.function_ids:
                return leaf
        raise RegistryError(f"function {function_id!r} is not in any leaf")


class FunctionRegistry:
    def __init__(self):
        self._functions: dict[str, FunctionSpec] = {}
        self._forward: dict[str, set[str]] = {}
        self._backward: dict[str, set[str]] = {}
        self._tree: FunctionTree | None = None

    def __contains__(self, function_id: str) -> bool:
        return function_id in self._functions

    def __len__(self) -> int:
        return len(self._functions)

    def ids(self) -> list[str]:
        return list(self._functions)

    def get(self, function_id: str) -> FunctionSpec:
        try:
            return self._functions[function_id]
        except KeyError:
            raise RegistryError(f"unknown function {function_id!r}") from None

    def functions(self) -> list[FunctionSpec]:
        return list(self._functions.values())

    def forward_deps(self, function_id: str) -> set[str]:
        self.get(function_id)
        return set(self._forward.get(function_id, ()))

    def backward_deps(self, function_id: str) -> set[str]:
        self.get(function_id)
        return set(self._backward.get(function_id, ()))

    def register_function(self, spec: FunctionSpec, links: list[DependencyLink] = ()) -> None:
        if spec.id in self._functions:
            raise RegistryError(f"duplicate id: {spec.id!r} is already registered")
        if spec.id == STOPPER_ID:
            raise RegistryError(f"{STOPPER_ID!r} is reserved for the chain stopper")
        for link in links:
            for end in (link.provider, link.consumer):
                if end != spec.id and end not in self._functions:
                    raise RegistryError(f"link references unknown id {end!r}")
        self._functions[spec.id] = spec
        try:
            self.add_links(links)
        except RegistryError:
            del self._functions[spec.id]
            raise
        self._tree = None

    def add_links(self, links: list[DependencyLink]) -> None:
        """Add dependency edges in both directions; rejects cycles atomically."""
        for link in links:
            for end in (link.provider, link.consumer):
                if end not in self._functions:
                    raise RegistryError(f"link references unknown id {end!r}")
        added = []
        for link in links:
            forward = self._forward.setdefault(link.provider, set())
            if link.consumer not in forward:
                forward.add(link.consumer)
                self._backward.setdefault(link.consumer, set()).add(link.provider)
                added.append(link)
        cycle = self._find_cycle()
        if cycle:
            # Roll back so the registry stays consistent after the error.
            for link in added:
                self._forward.get(link.provider, set()).discard(link.consumer)
                self._backward.get(link.consumer, set()).discard(link.provider)
            raise RegistryError("dependency cycle: " + " -> ".join(cycle))
        self._tree = None

    def _find_cycle(self) -> list[str] | None:
        visiting: set[str] = set()
        done: set[str] = set()

        def visit(node: str, path: list[str]) -> list[str] | None:
            if node in done:
                return None
            if node in visiting:
                return path[path.index(node):] + [node]
            visiting.add(node)
            path.append(node)
            for nxt in sorted(self._forward.get(node, ())):
                found = visit(nxt, path)
                if found:
                    return found
            path.pop()
            visiting.discard(node)
            done.add(node)
            return None

        for start in self._functions:
            found = visit(start, [])
            if found:
                return found
        return None

    def dependency_closure(self, requested: list[str]) -> list[str]:
        """Topologically order the requested functions plus everything they
        transitively depend on.

        Providers always precede consumers. Ties are broken by requested
        order first, then id order, so the result is deterministic.
        """
        for fid in requested:
            self.get(fid)
        closure: set[str] = set()
        stack = list(requested)
        while stack:
            fid = stack.pop()
            if fid in closure:
                continue
            closure.add(fid)
            stack.extend(self._backward.get(fid, ()))

        rank = {fid: i for i, fid in enumerate(requested)}
        pending = {fid: {d for d in self._backward.get(fid, ()) if d in closure} for fid in closure}
        ordered: list[str] = []
        while pending:
            ready = [fid for fid, deps in pending.items() if not deps]
            nxt = min(ready, key=lambda fid: (rank.get(fid, len(rank)), fid))
            ordered.append(nxt)
            del pending[nxt]
            for deps in pending.values():
                deps.discard(nxt)
        return ordered

    def build_tree(self) -> FunctionTree:
        """Group functions into the category tree; every leaf gains the stopper."""
        if not self._functions:
            raise RegistryError("empty registry: nothing to build a tree from")
        if self._tree is not None:
            return self._tree
        root = TreeNode("all", "all supported functions")
        leaves: dict[tuple[str, ...], list[str]] = {}
        for spec in self._functions.values():
            leaves.setdefault(spec.category_path, []).append(spec.id)
        for path, members in leaves.items():
            node = root
            for depth, name in enumerate(path):
                if depth == len(path) - 1:
                    node.children.append(TreeLeaf(name, path, tuple(members)))
                    break
                nxt = next(
                    (c for c in node.children if isinstance(c, TreeNode) and c.name == name),
                    None,
                )
                if nxt is None:
                    nxt = TreeNode(name, f"{name} functions")
                    node.children.append(nxt)
                node = nxt
        if len(root.children) == 1 and isinstance(root.children[0], TreeLeaf):
            tree = FunctionTree(root.children[0])
        else:
            tree = FunctionTree(root)
        self._tree = tree
        return tree


# ---------------------------------------------------------------------------
# Metadata files
#
# A user-defined function arrives as one JSON object mirroring FunctionSpec
# plus "depends_on": ids whose outputs it consumes. The built-in catalog uses
# the same schema wrapped in {"functions": [...]}.
# ---------------------------------------------------------------------------

_EXECUTOR_KINDS = ("stub", "command", "http")


def _fail(source: str, path: str, message: str) -> RegistryError:
    return RegistryError(f"{source}: {path}: {message}")


def _expect(obj, key, types, source, path, type_name):
    if key not in obj:
        raise _fail(source, f"{path}.{key}", "missing field")
    value = obj[key]
    allowed = types if isinstance(types, tuple) else (types,)
    if not isinstance(value, allowed) or (isinstance(value, bool) and bool not in allowed):
        raise _fail(source, f"{path}.{key}", f"expected {type_name}")
    return value


def parse_function_metadata(obj: dict, source: str = "<metadata>") -> tuple[FunctionSpec, list[str]]:
    """Validate one function-metadata object; returns the spec and its depends_on ids."""
    if not isinstance(obj, dict):
        raise _fail(source, "$", "expected a JSON object")
    path = "$"
    fid = _expect(obj, "id", str, source, path, "a string")
    display = obj.get("display_name", fid)
    description = _expect(obj, "description", str, source, path, "a string")
    category = _expect(obj, "category", list, source, path, "a list of category names")
    if not category or not all(isinstance(c, str) for c in category):
        raise _fail(source, f"{path}.category", "expected a non-empty list of strings")

    raw_inputs = _expect(obj, "inputs", list, source, path, "a list")
    if not raw_inputs:
        raise _fail(source, f"{path}.inputs", "a function needs at least one input")
    inputs = []
    for i, raw in enumerate(raw_inputs):
        ipath = f"{path}.inputs[{i}]"
        if not isinstance(raw, dict):
            raise _fail(source, ipath, "expected an object")
        kind = _expect(raw, "kind", str, source, ipath, "a string")
        if kind not in ("text", "integer", "real", "boolean"):
            raise _fail(source, f"{ipath}.kind", f"unknown kind {kind!r}")
        inputs.append(
            InputSpec(
                _expect(raw, "name", str, source, ipath, "a string"),
                _expect(raw, "expects", str, source, ipath, "a string"),
                kind,
            )
        )

    raw_output = _expect(obj, "output", dict, source, path, "an object")
    okind = _expect(raw_output, "kind", str, source, f"{path}.output", "a string")
    if okind not in ("text", "integer", "real", "boolean"):
        raise _fail(source, f"{path}.output.kind", f"unknown kind {okind!r}")
    output = OutputSpec(
        _expect(raw_output, "column", str, source, f"{path}.output", "a string"),
        _expect(raw_output, "description", str, source, f"{path}.output", "a string"),
        okind,
    )

    executor = _parse_executor(
        _expect(obj, "executor", dict, source, path, "an object"), source, f"{path}.executor"
    )

    hints = obj.get("trigger_hints", [])
    if not isinstance(hints, list) or not all(isinstance(h, str) for h in hints):
        raise _fail(source, f"{path}.trigger_hints", "expected a list of strings")

    depends_on = obj.get("depends_on", [])
    if not isinstance(depends_on, list) or not all(isinstance(d, str) for d in depends_on):
        raise _fail(source, f"{path}.depends_on", "expected a list of function ids")

    spec = FunctionSpec(
        id=fid,
        display_name=display,
        description=description,
        category_path=tuple(category),
        inputs=tuple(inputs),
        output=output,
        executor=executor,
        trigger_hints=tuple(hints),
        version=str(obj.get("version", "1")),
    )
    return spec, list(depends_on)


def _parse_executor(raw: dict, source: str, path: str) -> ExecutorSpec:
    kind = _expect(raw, "kind", str, source, path, "a string")
    if kind == "stub":
        rules = raw.get("rules", [])
        parsed = []
        for i, rule in enumerate(rules):
            rpath = f"{path}.rules[{i}]"
            if not isinstance(rule, dict):
                raise _fail(source, rpath, "expected an object")
            parsed.append(
                (
                    _expect(rule, "contains", str, source, rpath, "a string"),
                    str(_expect(rule, "output", (str, int, float), source, rpath, "a scalar")),
                )
            )
        if "default" not in raw:
            raise _fail(source, f"{path}.default", "stub rule tables must be total")
        return StubExecutorSpec(tuple(parsed), str(raw["default"]))
    if kind == "command":
        argv = _expect(raw, "argv", list, source, path, "a list of strings")
        if not argv or not all(isinstance(a, str) for a in argv):
            raise _fail(source, f"{path}.argv", "expected a non-empty list of strings")
        return CommandExecutorSpec(tuple(argv))
    if kind == "http":
        return HttpExecutorSpec(
            _expect(raw, "endpoint", str, source, path, "a string"),
            raw.get("request_field", "inputs"),
            raw.get("response_field", "outputs"),
        )
    raise _fail(source, f"{path}.kind", f"expected one of {_EXECUTOR_KINDS}")


def register_metadata(registry: FunctionRegistry, obj: dict, source: str = "<metadata>") -> FunctionSpec:
    spec, depends_on = parse_function_metadata(obj, source)
    links = [DependencyLink(provider=d, consumer=spec.id) for d in depends_on]
    registry.register_function(spec, links)
    return spec


def register_many(
    registry: FunctionRegistry, entries: list[dict], source: str = "<metadata>"
) -> list[FunctionSpec]:
    """Two-phase registration so entries may depend on later ones in the file."""
    parsed = [
        parse_function_metadata(
            entry, source if len(entries) == 1 else f"{source}: functions[{i}]"
        )
        for i, entry in enumerate(entries)
    ]
    for spec, _ in parsed:
        registry.register_function(spec, [])
    links = [
        DependencyLink(provider=dep, consumer=spec.id)
        for spec, depends_on in parsed
        for dep in depends_on
    ]
    registry.add_links(links)
    return [spec for spec, _ in parsed]


def load_metadata_file(registry: FunctionRegistry, path: str | Path) -> list[FunctionSpec]:
    """Load one UDF metadata file (single object) or a catalog ({"functions": [...]})."""
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise RegistryError(f"{path}: unreadable: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise RegistryError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if isinstance(doc, dict) and "functions" in doc:
        entries = doc["functions"]
        if not isinstance(entries, list):
            raise _fail(str(path), "$.functions", "expected a list")
    else:
        entries = [doc]
    return register_many(registry, entries, source=str(path))
