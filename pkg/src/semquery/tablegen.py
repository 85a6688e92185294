"""Table generation: one planned annotation call per stage entry.

Each entry searches the function tree down to a leaf, assembles the
candidate set (leaf members, the chain stopper, and the planned call's
dependency-linked functions), runs an alias check so existing columns are
reused instead of re-annotated, binds parameters, invokes the executor, and
records the new column in the column-mapping graph.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .executors import ExecutionFailure, run_executor
from .filtering import PlannedCall
from .gateway import CompletionRequest, Gateway, ToolCandidate, encode_payload
from .registry import (
    STOPPER_DESCRIPTION,
    STOPPER_ID,
    FunctionRegistry,
    FunctionSpec,
    FunctionTree,
    TreeLeaf,
    TreeNode,
)
from .table import ColumnDescriptor, Provenance, Table


class TableGenError(Exception):
    """Stage-level table generation failure."""


@dataclass(frozen=True)
class CandidateSet:
    """Tool-call candidates for one planned call; always includes the stopper."""

    function_ids: tuple[str, ...]

    def __contains__(self, function_id: str) -> bool:
        return function_id in self.function_ids

    def __len__(self) -> int:
        return len(self.function_ids)


@dataclass(frozen=True)
class AliasDecision:
    kind: str  # "execute" | "alias"
    column_id: str | None = None
    mechanism: str | None = None  # "provenance-exact" | "description-match"

    @staticmethod
    def execute() -> "AliasDecision":
        return AliasDecision("execute")

    @staticmethod
    def alias(column_id: str, mechanism: str) -> "AliasDecision":
        return AliasDecision("alias", column_id, mechanism)


@dataclass(frozen=True)
class ResolvedCall:
    """A planned call with bindings resolved to concrete column ids."""

    function_id: str
    inputs: tuple[tuple[str, str], ...]  # (parameter name, column id)
    output_name: str


@dataclass(frozen=True)
class Stop:
    """The stopper was selected: the table already holds what the query needs."""


class ColumnMappingGraph:
    """Columns as nodes, annotation steps as labeled edges, with an event log."""

    def __init__(self):
        self.nodes: list[dict] = []
        self.edges: list[dict] = []
        self.events: list[dict] = []
        self._known: set[str] = set()

    def ensure_node(self, descriptor: ColumnDescriptor) -> None:
        if descriptor.id in self._known:
            return
        self._known.add(descriptor.id)
        node = {
            "id": descriptor.id,
            "name": descriptor.name,
            "description": descriptor.description,
        }
        self.nodes.append(node)
        self.events.append({"seq": len(self.events), "event": "node", **node})

    def add_edge(
        self,
        inputs: list[str],
        output: str,
        function_id: str,
        edge_kind: str,
        mechanism: str | None = None,
    ) -> None:
        for column_id in [*inputs, output]:
            if column_id not in self._known:
                raise TableGenError(f"graph edge references unknown column {column_id!r}")
        edge = {
            "inputs": list(inputs),
            "output": output,
            "function": function_id,
            "kind": edge_kind,
        }
        if mechanism is not None:
            edge["mechanism"] = mechanism
        self.edges.append(edge)
        self.events.append({"seq": len(self.events), "event": "edge", **edge})

    def snapshot(self) -> dict:
        return {"nodes": list(self.nodes), "edges": list(self.edges), "seq": len(self.events)}


# -- tree search -----------------------------------------------------------------


def tree_search(tree: FunctionTree, spec: FunctionSpec, gateway: Gateway) -> TreeLeaf:
    """Descend the category tree one gateway tool-call per level."""
    node = tree.root
    while not isinstance(node, TreeLeaf):
        options = [
            {
                "name": child.name,
                "description": child.description
                if isinstance(child, TreeNode)
                else "/".join(child.path),
            }
            for child in node.children
        ]
        payload = {
            "task": "tree_descend",
            "target": {
                "id": spec.id,
                "description": spec.description,
                "category_path": list(spec.category_path),
            },
            "options": options,
        }
        request = CompletionRequest(
            stage_tag="table-gen",
            system_text="Pick the function category that contains the target annotation.",
            user_text=encode_payload("Choose one branch.", payload),
            tool_candidates=tuple(
                ToolCandidate(option["name"], {"type": "object", "properties": {}})
                for option in options
            ),
        )
        chosen = _choose_branch(gateway, request, {option["name"] for option in options})
        node = next(child for child in node.children if child.name == chosen)
    return node


def _choose_branch(gateway: Gateway, request: CompletionRequest, allowed: set[str]) -> str:
    response = gateway.complete(request)
    name = response.tool_call.name if response.tool_call else None
    if name in allowed:
        return name
    retry = CompletionRequest(
        stage_tag=request.stage_tag,
        system_text=request.system_text,
        user_text=request.user_text + f"\nnote: {name!r} is not one of the branches; pick again.",
        tool_candidates=request.tool_candidates,
    )
    response = gateway.complete(retry)
    name = response.tool_call.name if response.tool_call else None
    if name in allowed:
        return name
    raise TableGenError(f"tree search picked {name!r}, which is not a branch, twice")


def assemble_candidates(
    registry: FunctionRegistry, tree: FunctionTree, leaf: TreeLeaf, planned_id: str
) -> CandidateSet:
    """Leaf members plus the planned call's linked functions plus the stopper."""
    ids = list(leaf.function_ids)
    linked = sorted(
        (registry.forward_deps(planned_id) | registry.backward_deps(planned_id)) - set(ids)
    )
    ids.extend(linked)
    ids.append(STOPPER_ID)
    return CandidateSet(tuple(ids))


# -- call selection ----------------------------------------------------------------


_KIND_TO_JSON = {"text": "string", "integer": "integer", "real": "number", "boolean": "boolean"}


def _candidate_tools(registry: FunctionRegistry, candidates: CandidateSet) -> tuple[ToolCandidate, ...]:
    tools = []
    for fid in candidates.function_ids:
        if fid == STOPPER_ID:
            tools.append(
                ToolCandidate(
                    STOPPER_ID,
                    {
                        "description": STOPPER_DESCRIPTION,
                        "type": "object",
                        "properties": {},
                        "required": [],
                    },
                )
            )
            continue
        spec = registry.get(fid)
        tools.append(
            ToolCandidate(
                fid,
                {
                    "description": (
                        f"{spec.description} Produces column "
                        f"'{spec.output.column}': {spec.output.description}."
                    ),
                    "type": "object",
                    "properties": {
                        inp.name: {
                            "type": "string",
                            "description": (
                                f"name of the table column holding {inp.expects} "
                                f"({_KIND_TO_JSON[inp.kind]} cells)"
                            ),
                        }
                        for inp in spec.inputs
                    },
                    "required": [inp.name for inp in spec.inputs],
                },
            )
        )
    return tuple(tools)


def select_call(
    candidates: CandidateSet,
    registry: FunctionRegistry,
    table: Table,
    query: str,
    planned: ResolvedCall | None,
    gateway: Gateway,
) -> ResolvedCall | Stop:
    """Gateway tool-call restricted to the candidate set (plus stopper).

    The response binds each parameter to a column name; selecting an id
    outside the candidates triggers one re-prompt, then a stage error.
    """
    payload = {
        "task": "select_call",
        "query": query,
        "schema": table.schema_summary(),
        "stopper": STOPPER_ID,
        "planned_next": None
        if planned is None
        else {
            "id": planned.function_id,
            "bindings": {param: table.column(cid).name for param, cid in planned.inputs},
            "output": planned.output_name,
        },
    }
    request = CompletionRequest(
        stage_tag="table-gen",
        system_text=(
            "Extend the table with the next annotation the query needs, or call "
            f"{STOPPER_ID} when it already holds enough information."
        ),
        user_text=encode_payload("Select the next annotation function.", payload),
        tool_candidates=_candidate_tools(registry, candidates),
    )
    for attempt in range(2):
        response = gateway.complete(request)
        call = response.tool_call
        if call is not None and call.name in candidates:
            if call.name == STOPPER_ID:
                return Stop()
            return _resolve_selection(registry, table, call.name, call.arguments, planned)
        picked = call.name if call else None
        if attempt == 0:
            request = CompletionRequest(
                stage_tag=request.stage_tag,
                system_text=request.system_text,
                user_text=request.user_text
                + f"\nnote: {picked!r} is not among the candidates; pick again.",
                tool_candidates=request.tool_candidates,
            )
    raise TableGenError(f"selected {picked!r}, which is outside the candidate set, twice")


def _resolve_selection(
    registry: FunctionRegistry,
    table: Table,
    function_id: str,
    arguments: dict,
    planned: ResolvedCall | None,
) -> ResolvedCall:
    spec = registry.get(function_id)
    inputs = []
    for input_spec in spec.inputs:
        bound = arguments.get(input_spec.name)
        if bound is None or not table.has_column(str(bound)):
            raise TableGenError(
                f"parameter {input_spec.name!r} of {function_id!r} is bound to "
                f"{bound!r}, which is not a table column"
            )
        inputs.append((input_spec.name, table.column(str(bound)).id))
    if planned is not None and planned.function_id == function_id:
        output_name = planned.output_name
    else:
        output_name = spec.output.column
        if table.has_column(output_name):
            suffix = 2
            while table.has_column(f"{output_name}_{suffix}"):
                suffix += 1
            output_name = f"{output_name}_{suffix}"
    return ResolvedCall(function_id, tuple(inputs), output_name)


# -- alias check and execution -------------------------------------------------------


def render_output_description(spec: FunctionSpec, input_names: dict[str, str]) -> str:
    return re.sub(
        r"\{(\w+)\}",
        lambda m: input_names.get(m.group(1), m.group(0)),
        spec.output.description,
    )


def _strip_template(description: str) -> str:
    return re.sub(r"\{(\w+)\}", "", description)


def _norm(text: str) -> str:
    return " ".join(text.casefold().split())


def alias_check(
    table: Table,
    call: ResolvedCall,
    spec: FunctionSpec,
    gateway: Gateway | None = None,
) -> AliasDecision:
    """Decide whether an existing column already matches the planned output.

    Provenance fingerprints catch exact re-derivations; otherwise the output
    description is compared against existing descriptors (by the gateway when
    one is supplied, else by the deterministic normalizer). Uncertainty
    resolves to execution.
    """
    input_fps = [table.column(cid).provenance.fingerprint for _, cid in call.inputs]
    would_be = Provenance.derived(spec.id, spec.version, input_fps)
    for descriptor in table.columns:
        if descriptor.provenance.fingerprint == would_be.fingerprint:
            return AliasDecision.alias(descriptor.id, "provenance-exact")

    input_names = {param: table.column(cid).name for param, cid in call.inputs}
    rendered = render_output_description(spec, input_names)
    if gateway is not None:
        payload = {
            "task": "alias_judgment",
            "proposed_description": rendered,
            "columns": [{"name": c.name, "description": c.description} for c in table.columns],
        }
        request = CompletionRequest(
            stage_tag="table-gen",
            system_text="Judge whether an existing column already matches this output.",
            user_text=encode_payload("Does any column already hold this annotation?", payload),
        )
        response = gateway.complete(request)
        if response.tool_call is not None and response.tool_call.name == "report_alias":
            name = response.tool_call.arguments.get("column")
            if name and table.has_column(name):
                return AliasDecision.alias(table.column(name).id, "description-match")
        return AliasDecision.execute()

    stripped = _norm(_strip_template(spec.output.description))
    for descriptor in table.columns:
        existing = _norm(descriptor.description)
        if existing == _norm(rendered) or (stripped and existing == stripped):
            return AliasDecision.alias(descriptor.id, "description-match")
    return AliasDecision.execute()


def execute_call(
    table: Table,
    call: ResolvedCall,
    spec: FunctionSpec,
    decision: AliasDecision,
    graph: ColumnMappingGraph,
    run_counts: dict[str, int],
) -> tuple[Table, str]:
    """Apply one call: alias an existing column or run the executor row-wise.

    Returns the extended table and the id of the output column.
    """
    input_names = {param: table.column(cid).name for param, cid in call.inputs}
    description = render_output_description(spec, input_names)

    if decision.kind == "alias":
        new_table = table.alias_column(decision.column_id, call.output_name, description)
        output = new_table.column(call.output_name)
        graph.ensure_node(output)
        graph.add_edge([decision.column_id], output.id, spec.id, "alias", decision.mechanism)
        return new_table, output.id

    bound = [table.cells(cid) for _, cid in call.inputs]
    rows = list(zip(*bound)) if bound else []
    try:
        outputs = run_executor(spec, rows)
    except ExecutionFailure as exc:
        raise TableGenError(f"executor {spec.id!r} failed: {exc}") from exc
    run_counts[spec.id] = run_counts.get(spec.id, 0) + 1
    provenance = Provenance.derived(
        spec.id, spec.version, [table.column(cid).provenance.fingerprint for _, cid in call.inputs]
    )
    new_table = table.add_column(call.output_name, description, spec.output.kind, provenance, outputs)
    output = new_table.column(call.output_name)
    graph.ensure_node(output)
    graph.add_edge([cid for _, cid in call.inputs], output.id, spec.id, "execute")
    return new_table, output.id


def resolve_planned_call(
    planned: PlannedCall, table: Table, call_columns: dict[int, str], call_index: int
) -> ResolvedCall:
    """Turn a planned call's bindings into concrete column ids.

    Earlier-call bindings resolve through the map of already-produced
    columns.
    """
    inputs = []
    for binding in planned.bindings:
        if binding.column_id is not None:
            column_id = binding.column_id
        else:
            if binding.call_index not in call_columns:
                raise TableGenError(
                    f"call {call_index} depends on call {binding.call_index}, "
                    "which has not produced a column yet"
                )
            column_id = call_columns[binding.call_index]
        if not table.has_column(column_id):
            raise TableGenError(f"bound column {column_id!r} is missing from the table")
        inputs.append((binding.param, column_id))
    return ResolvedCall(planned.function_id, tuple(inputs), planned.output_name)
