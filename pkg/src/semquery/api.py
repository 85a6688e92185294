"""One-call library entry point and the session runner behind it.

leap(query, data, description) loads the data, filters the query, walks the
stage machine, and returns (result, table). Interactive callers supply a
decide callback for warning and vague verdicts; non-interactive runs
auto-proceed on warnings and return the alternatives list for vague queries.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .codegen import ExecutionResult
from .config import Config
from .filtering import (
    Clear,
    FunctionChain,
    NumericUnderspecified,
    Proceed,
    QueryText,
    Respecify,
    Vague,
    confirm_proceed,
    filter_query,
)
from .gateway import Gateway
from .session import SessionAborted, SessionEngine, SessionError, SessionState
from .table import Table, load_data

MAX_DECISION_ROUNDS = 10


@dataclass
class SessionRun:
    """Everything one session produced, ready for transcripts and the API."""

    session_id: str
    query: str
    data_source: str
    description: str | dict
    verdict_history: list[dict] = field(default_factory=list)
    decisions: list[dict] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    table: Table | None = None
    result: ExecutionResult | None = None
    alternatives: list[str] | None = None
    aborted_feedback: str | None = None
    cost_report: dict | None = None
    state: SessionState | None = None
    started_at: float = field(default_factory=time.time)
    finished_at: float | None = None

    @property
    def final_verdict(self) -> dict | None:
        return self.verdict_history[-1] if self.verdict_history else None

    def outcome(self) -> str:
        if self.aborted_feedback is not None:
            return "aborted"
        if self.result is not None:
            return "done"
        if self.alternatives is not None:
            return "vague"
        return "pending"


def _session_id(query: str, data_source: str, description) -> str:
    digest = hashlib.sha256(
        json.dumps([query, data_source, description], sort_keys=True).encode("utf-8")
    ).hexdigest()
    return f"s{digest[:12]}"


class Runner:
    """Drives one session: filter, decisions, stage loop, bookkeeping."""

    def __init__(
        self,
        config: Config | None = None,
        udf_metadata: list[dict] | None = None,
        emit=None,
        session_id: str | None = None,
    ):
        self.config = config or Config()
        self.udf_metadata = list(udf_metadata or [])
        self.registry = self.config.build_registry(self.udf_metadata)
        self.ledger = self.config.new_ledger()
        self.gateway = Gateway(self.config.build_provider(), self.ledger)
        self._emit_external = emit or (lambda event: None)
        self._session_id = session_id

    def run(
        self,
        query: str,
        data,
        description,
        decide=None,
    ) -> SessionRun:
        data_source = str(data)
        run = SessionRun(
            session_id=self._session_id or _session_id(query, data_source, description),
            query=query,
            data_source=data_source,
            description=description,
        )

        def emit(event: dict) -> None:
            run.events.append(event)
            self._emit_external(event)

        table = load_data(data, description)
        run.table = table

        verdict = filter_query(
            QueryText(query), self.registry, table, self.gateway, self.config.alternatives_count
        )
        run.verdict_history.append(verdict.as_dict())
        emit({"type": "verdict", **verdict.as_dict()})

        active_query = QueryText(query)
        for _ in range(MAX_DECISION_ROUNDS):
            if isinstance(verdict, Clear):
                break
            if isinstance(verdict, NumericUnderspecified) and verdict.confirmed:
                break
            if isinstance(verdict, NumericUnderspecified):
                decision = decide(verdict.as_dict()) if decide else {"action": "proceed", "auto": True}
                run.decisions.append(decision)
                emit({"type": "decision", **decision})
                if decision["action"] == "proceed":
                    verdict = confirm_proceed(
                        verdict, Proceed(), self.registry, table, self.gateway,
                        self.config.alternatives_count,
                    )
                elif decision["action"] == "respecify":
                    active_query = QueryText(decision["query"])
                    verdict = confirm_proceed(
                        verdict, Respecify(decision["query"]), self.registry, table,
                        self.gateway, self.config.alternatives_count,
                    )
                    run.verdict_history.append(verdict.as_dict())
                    emit({"type": "verdict", **verdict.as_dict()})
                else:
                    raise SessionError(
                        f"decision {decision['action']!r} is not valid for a warning verdict"
                    )
                continue
            # Vague: a vague verdict terminates the run unless an alternative
            # is chosen interactively.
            alternatives = [a.raw for a in verdict.alternatives]
            if decide is None:
                run.alternatives = alternatives
                run.cost_report = self.ledger.report().as_dict()
                run.finished_at = time.time()
                return run
            decision = decide(verdict.as_dict())
            run.decisions.append(decision)
            emit({"type": "decision", **decision})
            if decision["action"] != "choose_alternative":
                raise SessionError(
                    f"decision {decision['action']!r} is not valid for a vague verdict"
                )
            index = int(decision["index"])
            if not 0 <= index < len(alternatives):
                raise SessionError(f"alternative index {index} out of range")
            active_query = QueryText(alternatives[index])
            verdict = filter_query(
                active_query, self.registry, table, self.gateway, self.config.alternatives_count
            )
            run.verdict_history.append(verdict.as_dict())
            emit({"type": "verdict", **verdict.as_dict()})
        else:
            raise SessionError("too many decision rounds without a runnable verdict")

        chain = verdict.chain if not isinstance(verdict, Vague) else FunctionChain()
        state = SessionState(
            query=active_query,
            verdict=verdict,
            table=table,
            chain=chain,
            ledger=self.ledger,
        )
        run.state = state
        engine = SessionEngine(self.registry, self.gateway, self.config.engine_config(), emit)
        try:
            engine.run_session(state)
        except SessionAborted:
            run.aborted_feedback = state.aborted_feedback
        run.table = state.table
        run.result = state.result if run.aborted_feedback is None else None
        run.cost_report = self.ledger.report().as_dict()
        run.finished_at = time.time()
        return run


def leap(
    query: str,
    data,
    description,
    udf_metadata: list[dict] | None = None,
    config: Config | None = None,
    decide=None,
    emit=None,
    out_dir: str | Path | None = None,
):
    """Answer a natural-language query over a data source.

    Returns (result, table). For vague queries in non-interactive mode the
    first element is the list of alternative query texts instead of an
    execution result. Aborted sessions raise SessionAborted with the
    feedback text.
    """
    runner = Runner(config=config, udf_metadata=udf_metadata, emit=emit)
    run = runner.run(query, data, description, decide=decide)
    if out_dir is not None:
        from .transcript import write_session_files

        write_session_files(run, runner.config, Path(out_dir), udf_metadata=udf_metadata)
    if run.aborted_feedback is not None:
        raise SessionAborted(run.aborted_feedback)
    if run.alternatives is not None:
        return run.alternatives, run.table
    return run.result, run.table
