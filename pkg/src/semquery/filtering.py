"""Pre-execution query filter.

Before anything runs, the filter classifies the query: clear queries get a
planned annotation chain, queries with unspecified numeric criteria get the
chain plus a warning the user can act on, and vague queries terminate the
run with a list of alternative queries. Semantic judgment is delegated to
the completion gateway; chain ordering comes from the registry's dependency
closure.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, replace

from .gateway import CompletionRequest, Gateway, encode_payload
from .registry import FunctionRegistry, FunctionSpec
from .table import Table


class PlanningError(Exception):
    """Raised when the filter cannot produce a well-formed verdict."""


class VagueReason(enum.Enum):
    LACK_OF_CONTEXT = "lack-of-context"
    DATA_INSUFFICIENCY = "data-insufficiency"
    INFORMAL_EXPRESSION = "informal-expression"


@dataclass(frozen=True)
class QueryText:
    raw: str

    def __post_init__(self):
        if not self.raw.strip():
            raise PlanningError("empty query")


@dataclass(frozen=True)
class Binding:
    param: str
    # exactly one of the two is set: an existing column id, or the index of
    # an earlier call whose output feeds this parameter
    column_id: str | None = None
    call_index: int | None = None

    def as_dict(self) -> dict:
        if self.column_id is not None:
            return {"param": self.param, "column": self.column_id}
        return {"param": self.param, "call": self.call_index}


@dataclass(frozen=True)
class PlannedCall:
    function_id: str
    bindings: tuple[Binding, ...]
    output_name: str

    def as_dict(self) -> dict:
        return {
            "function": self.function_id,
            "bindings": [b.as_dict() for b in self.bindings],
            "output": self.output_name,
        }


@dataclass(frozen=True)
class FunctionChain:
    calls: tuple[PlannedCall, ...] = ()

    def __len__(self) -> int:
        return len(self.calls)

    def as_dict(self) -> list[dict]:
        return [call.as_dict() for call in self.calls]


@dataclass(frozen=True)
class Clear:
    chain: FunctionChain

    def as_dict(self) -> dict:
        return {"verdict": "clear", "chain": self.chain.as_dict()}


@dataclass(frozen=True)
class NumericUnderspecified:
    chain: FunctionChain
    warning: str
    placeholder_names: tuple[str, ...]
    confirmed: bool = False

    def as_dict(self) -> dict:
        return {
            "verdict": "numeric_underspecified",
            "chain": self.chain.as_dict(),
            "warning": self.warning,
            "placeholders": list(self.placeholder_names),
            "confirmed": self.confirmed,
        }


@dataclass(frozen=True)
class Vague:
    reason: VagueReason
    alternatives: tuple[QueryText, ...]

    def as_dict(self) -> dict:
        return {
            "verdict": "vague",
            "reason": self.reason.value,
            "alternatives": [a.raw for a in self.alternatives],
        }


QueryVerdict = Clear | NumericUnderspecified | Vague


@dataclass(frozen=True)
class Proceed:
    pass


@dataclass(frozen=True)
class Respecify:
    query: str


# -- gateway payloads ----------------------------------------------------------


def _functions_payload(registry: FunctionRegistry) -> list[dict]:
    return [
        {
            "id": spec.id,
            "trigger_hints": list(spec.trigger_hints),
            "output_column": spec.output.column,
            "output_description": spec.output.description,
            "output_kind": spec.output.kind,
        }
        for spec in registry.functions()
    ]


def _columns_payload(table: Table) -> list[dict]:
    return [
        {"name": c.name, "description": c.description, "kind": c.kind} for c in table.columns
    ]


def _tool_arguments(response, expected_name: str) -> dict:
    if response.tool_call is None or response.tool_call.name != expected_name:
        raise PlanningError(f"gateway did not answer with {expected_name}")
    return response.tool_call.arguments


@dataclass(frozen=True)
class _CheckOutcome:
    chain_exists: bool
    sql_answerable: bool
    requested: tuple[str, ...]
    unspecified: tuple[str, ...]
    vague_reason: str | None


def _run_query_check(query: QueryText, registry, table, gateway: Gateway) -> _CheckOutcome:
    payload = {
        "task": "query_check",
        "query": query.raw,
        "functions": _functions_payload(registry),
        "columns": _columns_payload(table),
    }
    request = CompletionRequest(
        stage_tag="filter",
        system_text=(
            "You screen analytical queries before execution. Decide whether the "
            "data can be annotated into a table that answers the query with "
            "deterministic SQL, and report any unspecified numeric criteria."
        ),
        user_text=encode_payload("Check this query against the data and functions.", payload),
    )
    arguments = _tool_arguments(gateway.complete(request), "report_query_check")
    requested = tuple(arguments.get("requested_functions", ()))
    for fid in requested:
        if fid not in registry:
            raise PlanningError(f"gateway requested unknown function {fid!r}")
    return _CheckOutcome(
        chain_exists=bool(arguments.get("chain_exists")),
        sql_answerable=bool(arguments.get("sql_answerable")),
        requested=requested,
        unspecified=tuple(arguments.get("unspecified_values", ())),
        vague_reason=arguments.get("vague_reason"),
    )


def empty_chain_shortcut(
    query: QueryText,
    table: Table,
    requested: tuple[str, ...],
    registry: FunctionRegistry,
    gateway: Gateway,
) -> FunctionChain | None:
    """Return the empty chain when every column the query needs already exists.

    With no functions requested the data is trivially adequate; otherwise the
    gateway judges whether the requested outputs are already present among
    the column descriptors.
    """
    if not requested:
        return FunctionChain()
    payload = {
        "task": "adequacy",
        "query": query.raw,
        "required_outputs": [
            {
                "column": registry.get(fid).output.column,
                "description": registry.get(fid).output.description,
            }
            for fid in requested
        ],
        "columns": _columns_payload(table),
    }
    request = CompletionRequest(
        stage_tag="filter",
        system_text="You judge whether a table already holds the columns a query needs.",
        user_text=encode_payload(
            "Is the table already adequate to answer the query without new annotations?",
            payload,
        ),
    )
    arguments = _tool_arguments(gateway.complete(request), "report_adequacy")
    if arguments.get("adequate"):
        return FunctionChain()
    return None


# -- parameter binding ----------------------------------------------------------


def _norm(text: str) -> str:
    return " ".join(text.casefold().split())


def _token_set(text: str) -> set[str]:
    return set(re.findall(r"[0-9a-z]+", text.casefold()))


@dataclass(frozen=True)
class _BindCandidate:
    name: str
    description: str
    kind: str
    column_id: str | None
    call_index: int | None
    recency: int
    producer: str | None  # function id of the earlier call that outputs it


def _bind_inputs(
    spec: FunctionSpec,
    registry: FunctionRegistry,
    table: Table,
    earlier: list[tuple[int, FunctionSpec]],
) -> tuple[Binding, ...]:
    candidates: list[_BindCandidate] = []
    for i, descriptor in enumerate(table.columns):
        candidates.append(
            _BindCandidate(
                descriptor.name, descriptor.description, descriptor.kind,
                descriptor.id, None, i, None,
            )
        )
    offset = len(table.columns)
    for call_index, earlier_spec in earlier:
        candidates.append(
            _BindCandidate(
                earlier_spec.output.column,
                earlier_spec.output.description,
                earlier_spec.output.kind,
                None,
                call_index,
                offset + call_index,
                earlier_spec.id,
            )
        )
    providers = registry.backward_deps(spec.id)

    bindings = []
    for input_spec in spec.inputs:
        want_norm = _norm(input_spec.expects)
        want_tokens = _token_set(input_spec.expects)
        best: tuple[tuple[bool, int, int], _BindCandidate] | None = None
        for candidate in candidates:
            if _norm(candidate.description) == want_norm or _norm(candidate.name) == want_norm:
                score = 3
            elif want_tokens and want_tokens <= (
                _token_set(candidate.description) | _token_set(candidate.name)
            ):
                score = 2
            elif candidate.kind == input_spec.kind:
                score = 1
            else:
                continue
            # A description-compatible column produced by a declared provider
            # is what a dependency link promises; prefer it outright.
            linked = score >= 2 and candidate.producer in providers
            ranked = ((linked, score, candidate.recency), candidate)
            if best is None or ranked[0] > best[0]:
                best = ranked
        if best is None:
            raise PlanningError(
                f"cannot bind parameter {input_spec.name!r} of {spec.id!r}: "
                f"no column matches {input_spec.expects!r}"
            )
        chosen = best[1]
        bindings.append(Binding(input_spec.name, chosen.column_id, chosen.call_index))
    return tuple(bindings)


def plan_chain(ordered_ids: list[str], registry: FunctionRegistry, table: Table) -> FunctionChain:
    """Bind parameters and assign output names for a closure-ordered id list."""
    calls: list[PlannedCall] = []
    earlier: list[tuple[int, FunctionSpec]] = []
    used_names = set(table.column_names)
    for fid in ordered_ids:
        spec = registry.get(fid)
        bindings = _bind_inputs(spec, registry, table, earlier)
        name = spec.output.column
        if name in used_names:
            suffix = 2
            while f"{name}_{suffix}" in used_names:
                suffix += 1
            name = f"{name}_{suffix}"
        used_names.add(name)
        calls.append(PlannedCall(fid, bindings, name))
        earlier.append((len(calls) - 1, spec))
    return FunctionChain(tuple(calls))


# -- the filter ------------------------------------------------------------------


def filter_query(
    query: str | QueryText,
    registry: FunctionRegistry,
    table: Table,
    gateway: Gateway,
    alternatives_count: int = 3,
) -> QueryVerdict:
    if isinstance(query, str):
        query = QueryText(query)
    check = _run_query_check(query, registry, table, gateway)

    if not (check.chain_exists and check.sql_answerable):
        reason = _parse_reason(check.vague_reason)
        alternatives = _alternatives(query, registry, table, gateway, alternatives_count)
        return Vague(reason, tuple(alternatives))

    chain = empty_chain_shortcut(query, table, check.requested, registry, gateway)
    if chain is None:
        ordered = registry.dependency_closure(list(check.requested))
        chain = plan_chain(ordered, registry, table)

    if check.unspecified:
        names = ", ".join(check.unspecified)
        warning = (
            f"The query leaves numeric criteria unspecified: {names}. "
            "Proceed to let code generation choose values from the data "
            "distribution, or respecify the query with explicit numbers."
        )
        return NumericUnderspecified(chain, warning, tuple(check.unspecified))
    return Clear(chain)


def _parse_reason(raw: str | None) -> VagueReason:
    for reason in VagueReason:
        if reason.value == raw:
            return reason
    return VagueReason.LACK_OF_CONTEXT


def _alternatives(
    query: QueryText,
    registry: FunctionRegistry,
    table: Table,
    gateway: Gateway,
    count: int,
) -> list[QueryText]:
    proposals = _propose(query, registry, table, gateway, count)
    valid = [p for p in proposals if _validates(p, registry, table, gateway)]
    if len(valid) < len(proposals):
        # Invalid suggestions are dropped and regenerated exactly once.
        retry = _propose(query, registry, table, gateway, count, attempt=2)
        for proposal in retry:
            if len(valid) >= count:
                break
            if proposal.raw not in {v.raw for v in valid} and _validates(
                proposal, registry, table, gateway
            ):
                valid.append(proposal)
    if not valid:
        raise PlanningError("no valid alternative queries could be generated")
    return valid[:count]


def _propose(query, registry, table, gateway, count, attempt=1) -> list[QueryText]:
    payload = {
        "task": "alternatives",
        "query": query.raw,
        "count": count,
        "attempt": attempt,
        "functions": _functions_payload(registry),
        "columns": _columns_payload(table),
    }
    request = CompletionRequest(
        stage_tag="filter",
        system_text=(
            "The query was too vague to execute. Suggest specific alternative "
            "queries answerable from the data with the available functions."
        ),
        user_text=encode_payload("Propose alternative queries.", payload),
    )
    arguments = _tool_arguments(gateway.complete(request), "propose_alternatives")
    out = []
    for text in arguments.get("alternatives", []):
        if isinstance(text, str) and text.strip():
            out.append(QueryText(text))
    return out


def _validates(query: QueryText, registry, table, gateway: Gateway) -> bool:
    try:
        check = _run_query_check(query, registry, table, gateway)
    except PlanningError:
        return False
    if not (check.chain_exists and check.sql_answerable):
        return False
    try:
        if empty_chain_shortcut(query, table, check.requested, registry, gateway) is None:
            ordered = registry.dependency_closure(list(check.requested))
            plan_chain(ordered, registry, table)
    except PlanningError:
        return False
    return True


def confirm_proceed(
    verdict: QueryVerdict,
    decision: Proceed | Respecify,
    registry: FunctionRegistry,
    table: Table,
    gateway: Gateway,
    alternatives_count: int = 3,
) -> QueryVerdict:
    """Apply the user's decision to a numeric warning verdict.

    Proceeding adopts the planned chain and defers the unspecified values to
    code generation; respecifying re-runs the filter on the new query.
    """
    if not isinstance(verdict, NumericUnderspecified):
        raise PlanningError("decision submitted for a verdict without a warning")
    if isinstance(decision, Proceed):
        return replace(verdict, confirmed=True)
    return filter_query(decision.query, registry, table, gateway, alternatives_count)
