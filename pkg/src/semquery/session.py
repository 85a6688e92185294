"""Stage machine driving a session from annotation to displayed result.

Stages follow the shape of a desk analysis: annotate the table while the
planned chain is unfinished, then generate code, execute it, and display the
result. A progress record tracks every stage entry; three consecutive
entries of the same stage that all fail abort the session with detailed
feedback. A failed execution discards the generated code so the next pass
regenerates it instead of re-running code that cannot succeed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .codegen import (
    CodegenError,
    ExecutionResult,
    GeneratedCode,
    execute_sql,
    generate_code,
    resolve_placeholders,
)
from .executors import ExecutionFailure
from .filtering import (
    Clear,
    FunctionChain,
    NumericUnderspecified,
    QueryText,
    QueryVerdict,
)
from .gateway import CompletionRequest, CostLedger, Gateway, GatewayError, encode_payload
from .registry import STOPPER_ID, FunctionRegistry, FunctionTree
from .sqlrun import SqlExecError, SqlParseError
from .table import Table, TableError
from .tablegen import (
    CandidateSet,
    ColumnMappingGraph,
    Stop,
    TableGenError,
    alias_check,
    assemble_candidates,
    execute_call,
    resolve_planned_call,
    select_call,
    tree_search,
)

_STAGE_FAILURES = (
    TableGenError,
    CodegenError,
    ExecutionFailure,
    GatewayError,
    SqlExecError,
    SqlParseError,
    TableError,
)


class SessionError(Exception):
    """Session was driven outside its contract (bad verdict, bad decision)."""


class SessionAborted(Exception):
    """Repeat-termination fired; carries the feedback text."""

    def __init__(self, feedback: str):
        self.feedback = feedback
        super().__init__(feedback)


class Stage(enum.Enum):
    TABLE_GENERATION = "table_generation"
    CODE_GENERATION = "code_generation"
    CODE_EXECUTION = "code_execution"
    RESULT_DISPLAY = "result_display"
    DONE = "done"
    ABORTED = "aborted"


@dataclass(frozen=True)
class ProgressEntry:
    stage: Stage
    outcome: str  # "ok" | "error"
    detail: str = ""


class ProgressRecord:
    """Append-only history of executed stages."""

    def __init__(self):
        self.entries: list[ProgressEntry] = []

    def append(self, stage: Stage, outcome: str, detail: str = "") -> ProgressEntry:
        entry = ProgressEntry(stage, outcome, detail)
        self.entries.append(entry)
        return entry

    def __len__(self):
        return len(self.entries)


@dataclass
class SessionState:
    query: QueryText
    verdict: QueryVerdict
    table: Table
    chain: FunctionChain
    ledger: CostLedger
    chain_cursor: int = 0
    code: GeneratedCode | None = None
    result: ExecutionResult | None = None
    displayed: bool = False
    last_execution_error: str | None = None
    progress: ProgressRecord = field(default_factory=ProgressRecord)
    graph: ColumnMappingGraph = field(default_factory=ColumnMappingGraph)
    call_columns: dict[int, str] = field(default_factory=dict)
    run_counts: dict[str, int] = field(default_factory=dict)
    aborted_feedback: str | None = None


def select_stage(state: SessionState) -> Stage:
    """Deterministic next-stage rule over the session's progress."""
    if state.chain_cursor < len(state.chain):
        return Stage.TABLE_GENERATION
    if state.code is None:
        return Stage.CODE_GENERATION
    if state.result is None:
        return Stage.CODE_EXECUTION
    if not state.displayed:
        return Stage.RESULT_DISPLAY
    return Stage.DONE


def select_stage_via_gateway(state: SessionState, gateway: Gateway) -> Stage:
    """Gateway-delegated stage selection, API-compatible with select_stage."""
    payload = {
        "task": "select_stage",
        "cursor": state.chain_cursor,
        "chain_length": len(state.chain),
        "has_code": state.code is not None,
        "has_result": state.result is not None,
        "displayed": state.displayed,
    }
    request = CompletionRequest(
        stage_tag="stage-select",
        system_text="Choose the next stage for this analysis session.",
        user_text=encode_payload("Select the next stage.", payload),
    )
    response = gateway.complete(request)
    if response.tool_call is None or response.tool_call.name != "select_stage":
        raise SessionError("stage selection did not answer with select_stage")
    name = response.tool_call.arguments.get("stage")
    for stage in Stage:
        if stage.value == name:
            return stage
    raise SessionError(f"stage selection returned unknown stage {name!r}")


def check_termination(progress: ProgressRecord, table: Table | None = None) -> str | None:
    """Abort when the same stage has just failed three times in a row.

    Successful entries reset the run: a multi-call chain legitimately enters
    table generation many consecutive times while making progress.
    """
    tail = progress.entries[-3:]
    if len(tail) < 3:
        return None
    stage = tail[0].stage
    if any(e.stage is not stage for e in tail):
        return None
    if any(e.outcome != "error" for e in tail):
        return None
    lines = [
        f"Aborted: stage {stage.value} was entered three times consecutively without progress.",
        "Outcomes:",
    ]
    for i, entry in enumerate(tail, start=1):
        lines.append(f"  {i}. {entry.outcome}: {entry.detail or 'no detail'}")
    if table is not None:
        lines.append("Current schema:")
        lines.append(table.schema_summary())
    return "\n".join(lines)


def verdict_permits_execution(verdict: QueryVerdict) -> bool:
    if isinstance(verdict, Clear):
        return True
    return isinstance(verdict, NumericUnderspecified) and verdict.confirmed


@dataclass
class EngineConfig:
    select_mode: str = "replay"  # "replay" trusts the planned chain; "gateway" asks per call
    alias_matcher: str = "deterministic"  # or "gateway"
    stage_select: str = "rules"  # or "gateway"
    tree_enabled: bool = True
    placeholder_quantiles: tuple[float, float] = (0.9, 0.1)
    sample_rows: int = 3
    # Alternating failures (regenerate, re-execute, ...) never trip the
    # three-consecutive rule, so a hard ceiling keeps sessions finite.
    max_stage_entries: int = 30


class SessionEngine:
    """Executes stages for one session and emits progress events."""

    def __init__(
        self,
        registry: FunctionRegistry,
        gateway: Gateway,
        config: EngineConfig | None = None,
        emit=None,
    ):
        self.registry = registry
        self.gateway = gateway
        self.config = config or EngineConfig()
        self._emit = emit or (lambda event: None)
        self._tree: FunctionTree | None = None
        self._graph_seq = 0

    def emit(self, event: dict) -> None:
        self._emit(event)

    @property
    def tree(self) -> FunctionTree:
        if self._tree is None:
            self._tree = self.registry.build_tree()
        return self._tree

    # -- stage bodies -------------------------------------------------------

    def run_table_generation(self, state: SessionState) -> None:
        planned = state.chain.calls[state.chain_cursor]
        spec = self.registry.get(planned.function_id)
        resolved = resolve_planned_call(planned, state.table, state.call_columns, state.chain_cursor)

        if self.config.select_mode == "gateway":
            if self.config.tree_enabled:
                leaf = tree_search(self.tree, spec, self.gateway)
                candidates = assemble_candidates(self.registry, self.tree, leaf, planned.function_id)
            else:
                candidates = CandidateSet(tuple(self.registry.ids()) + (STOPPER_ID,))
            selection = select_call(
                candidates,
                self.registry,
                state.table,
                state.query.raw,
                resolved,
                self.gateway,
            )
            if isinstance(selection, Stop):
                if state.chain_cursor < len(state.chain):
                    self.emit(
                        {
                            "type": "divergence",
                            "detail": (
                                "stopper selected before the planned chain finished "
                                f"(cursor {state.chain_cursor} of {len(state.chain)})"
                            ),
                        }
                    )
                state.chain_cursor = len(state.chain)
                return
            resolved = selection
            spec = self.registry.get(resolved.function_id)

        matcher_gateway = self.gateway if self.config.alias_matcher == "gateway" else None
        decision = alias_check(state.table, resolved, spec, matcher_gateway)
        state.table, output_id = execute_call(
            state.table, resolved, spec, decision, state.graph, state.run_counts
        )
        state.call_columns[state.chain_cursor] = output_id
        state.chain_cursor += 1
        self._drain_graph_events(state)

    def run_code_generation(self, state: SessionState) -> None:
        unspecified: tuple[str, ...] = ()
        if isinstance(state.verdict, NumericUnderspecified):
            unspecified = state.verdict.placeholder_names
        code = generate_code(
            state.query.raw,
            state.table,
            self.gateway,
            unspecified_columns=unspecified,
            sample_rows=self.config.sample_rows,
            previous_error=state.last_execution_error,
        )
        if code.placeholders:
            code = resolve_placeholders(code, state.table, self.config.placeholder_quantiles)
        state.code = code
        self.emit({"type": "code", "sql": code.sql})

    def run_code_execution(self, state: SessionState) -> None:
        state.result = execute_sql(state.code, state.table)

    def run_result_display(self, state: SessionState) -> None:
        result = state.result
        self.emit(
            {
                "type": "result",
                "scalar": result.scalar if result.is_scalar else None,
                "row_count": len(result.rows),
                "columns": [name for name, _ in result.columns],
            }
        )
        state.displayed = True

    def _drain_graph_events(self, state: SessionState) -> None:
        for event in state.graph.events[self._graph_seq:]:
            payload = dict(event)
            payload["graph_seq"] = payload.pop("seq")
            self.emit({"type": "graph", **payload})
        self._graph_seq = len(state.graph.events)

    # -- the loop ------------------------------------------------------------

    def run_session(self, state: SessionState) -> SessionState:
        if not verdict_permits_execution(state.verdict):
            raise SessionError(
                "session cannot run: verdict must be clear or a confirmed warning"
            )
        for descriptor in state.table.columns:
            state.graph.ensure_node(descriptor)
        self._drain_graph_events(state)

        bodies = {
            Stage.TABLE_GENERATION: self.run_table_generation,
            Stage.CODE_GENERATION: self.run_code_generation,
            Stage.CODE_EXECUTION: self.run_code_execution,
            Stage.RESULT_DISPLAY: self.run_result_display,
        }
        while True:
            if self.config.stage_select == "gateway":
                stage = select_stage_via_gateway(state, self.gateway)
            else:
                stage = select_stage(state)
            if stage is Stage.DONE:
                self.emit({"type": "stage", "stage": "done", "status": "ok", "detail": ""})
                return state
            if stage not in bodies:
                raise SessionError(f"stage selection returned terminal stage {stage.value!r}")
            self.emit({"type": "stage", "stage": stage.value, "status": "entered", "detail": ""})
            try:
                bodies[stage](state)
            except _STAGE_FAILURES as exc:
                detail = str(exc)
                state.progress.append(stage, "error", detail)
                self.emit({"type": "stage", "stage": stage.value, "status": "error", "detail": detail})
                if stage is Stage.CODE_EXECUTION:
                    # Re-running unchanged failing code cannot succeed.
                    state.code = None
                    state.last_execution_error = detail
            else:
                state.progress.append(stage, "ok")
                self.emit({"type": "stage", "stage": stage.value, "status": "ok", "detail": ""})
            feedback = check_termination(state.progress, state.table)
            if (
                feedback is None
                and len(state.progress) >= self.config.max_stage_entries
                and select_stage(state) is not Stage.DONE
            ):
                feedback = (
                    f"Aborted: session exceeded {self.config.max_stage_entries} stage "
                    "entries without finishing.\nCurrent schema:\n"
                    + state.table.schema_summary()
                )
            if feedback is not None:
                state.aborted_feedback = feedback
                self.emit({"type": "stage", "stage": "aborted", "status": "error", "detail": feedback})
                raise SessionAborted(feedback)
