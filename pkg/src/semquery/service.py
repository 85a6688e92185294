"""Session-oriented HTTP/JSON service consumed by the web UI.

Sessions are created with a query and a server-local data path. Decisions
(proceed, respecify, choose-alternative) are accepted exactly when the
current verdict calls for one; anything else is a 409. Progress, graph
growth, results, and costs are observable per session, with a server-sent
event stream for live updates.
"""

from __future__ import annotations

import threading
import uuid

from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from .codegen import result_as_dict
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
from .gateway import Gateway, canonical_json
from .session import (
    SessionAborted,
    SessionEngine,
    SessionState,
    verdict_permits_execution,
)
from .table import load_data


class CreateSessionRequest(BaseModel):
    query: str
    data: str
    description: str | dict[str, str]
    udf_paths: list[str] = []


class DecisionRequest(BaseModel):
    action: str
    query: str | None = None
    index: int | None = None


class ManagedSession:
    def __init__(self, session_id: str, config: Config, request: CreateSessionRequest):
        self.id = session_id
        self.config = config
        self.request = request
        self.registry = config.build_registry()
        if request.udf_paths:
            from .registry import load_metadata_file

            for path in request.udf_paths:
                load_metadata_file(self.registry, path)
        self.ledger = config.new_ledger()
        self.gateway = Gateway(config.build_provider(), self.ledger)
        self.table = load_data(request.data, request.description)
        self.active_query = QueryText(request.query)
        self.verdict = None
        self.state: SessionState | None = None
        self.status = "created"
        self.feedback: str | None = None
        self.events: list[dict] = []
        self.condition = threading.Condition()
        self._thread: threading.Thread | None = None

    # -- events -----------------------------------------------------------

    def push(self, event: dict) -> None:
        with self.condition:
            event = {"seq": len(self.events), **event}
            self.events.append(event)
            self.condition.notify_all()

    def set_status(self, status: str) -> None:
        with self.condition:
            self.status = status
            self.condition.notify_all()

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> None:
        self.verdict = filter_query(
            self.active_query,
            self.registry,
            self.table,
            self.gateway,
            self.config.alternatives_count,
        )
        self.push({"type": "verdict", **self.verdict.as_dict()})
        self._advance()

    def _advance(self) -> None:
        if verdict_permits_execution(self.verdict):
            self.set_status("running")
            self._thread = threading.Thread(target=self._execute, daemon=True)
            self._thread.start()
        else:
            self.set_status("awaiting_decision")

    def _execute(self) -> None:
        chain = self.verdict.chain if not isinstance(self.verdict, Vague) else FunctionChain()
        state = SessionState(
            query=self.active_query,
            verdict=self.verdict,
            table=self.table,
            chain=chain,
            ledger=self.ledger,
        )
        self.state = state
        engine = SessionEngine(
            self.registry, self.gateway, self.config.engine_config(), self.push
        )
        try:
            engine.run_session(state)
        except SessionAborted:
            self.feedback = state.aborted_feedback
            self.set_status("aborted")
            return
        except Exception as exc:  # surfaced to clients rather than killing the worker
            self.feedback = f"internal error: {exc}"
            self.set_status("aborted")
            return
        self.table = state.table
        self.set_status("done")

    def decide(self, decision: DecisionRequest) -> None:
        if self.status != "awaiting_decision":
            raise HTTPException(status_code=409, detail=f"no decision expected while {self.status}")
        self.push({"type": "decision", "action": decision.action})
        if isinstance(self.verdict, NumericUnderspecified):
            if decision.action == "proceed":
                self.verdict = confirm_proceed(
                    self.verdict, Proceed(), self.registry, self.table, self.gateway,
                    self.config.alternatives_count,
                )
            elif decision.action == "respecify":
                if not decision.query or not decision.query.strip():
                    raise HTTPException(status_code=409, detail="respecify needs a query")
                self.active_query = QueryText(decision.query)
                self.verdict = confirm_proceed(
                    self.verdict, Respecify(decision.query), self.registry, self.table,
                    self.gateway, self.config.alternatives_count,
                )
            else:
                raise HTTPException(
                    status_code=409,
                    detail=f"{decision.action!r} is not valid for a warning verdict",
                )
        elif isinstance(self.verdict, Vague):
            if decision.action != "choose_alternative":
                raise HTTPException(
                    status_code=409,
                    detail=f"{decision.action!r} is not valid for a vague verdict",
                )
            alternatives = [a.raw for a in self.verdict.alternatives]
            if decision.index is None or not 0 <= decision.index < len(alternatives):
                raise HTTPException(status_code=409, detail="alternative index out of range")
            self.active_query = QueryText(alternatives[decision.index])
            self.verdict = filter_query(
                self.active_query, self.registry, self.table, self.gateway,
                self.config.alternatives_count,
            )
        else:
            raise HTTPException(status_code=409, detail="verdict accepts no decision")
        self.push({"type": "verdict", **self.verdict.as_dict()})
        self._advance()


def create_app(config: Config | None = None) -> FastAPI:
    from fastapi.middleware.cors import CORSMiddleware

    config = config or Config()
    app = FastAPI(title="semquery service")
    # the UI is served separately from the API during development
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    sessions: dict[str, ManagedSession] = {}
    sessions_lock = threading.Lock()

    def get_session(session_id: str) -> ManagedSession:
        with sessions_lock:
            session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return session

    @app.post("/sessions")
    def create_session(request: CreateSessionRequest):
        session_id = uuid.uuid4().hex[:12]
        try:
            session = ManagedSession(session_id, config, request)
            session.start()
        except HTTPException:
            raise
        except Exception as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        with sessions_lock:
            sessions[session_id] = session
        return {"id": session_id, "status": session.status, "verdict": session.verdict.as_dict()}

    @app.get("/sessions/{session_id}/verdict")
    def get_verdict(session_id: str):
        session = get_session(session_id)
        return {"status": session.status, "verdict": session.verdict.as_dict()}

    @app.post("/sessions/{session_id}/decision")
    def post_decision(session_id: str, decision: DecisionRequest):
        session = get_session(session_id)
        session.decide(decision)
        return {"status": session.status, "verdict": session.verdict.as_dict()}

    @app.get("/sessions/{session_id}/graph")
    def get_graph(session_id: str):
        session = get_session(session_id)
        if session.state is None:
            return {"nodes": [], "edges": [], "seq": 0}
        return session.state.graph.snapshot()

    @app.get("/sessions/{session_id}/result")
    def get_result(session_id: str):
        session = get_session(session_id)
        if session.status == "aborted":
            return {"status": "aborted", "feedback": session.feedback}
        if session.status == "awaiting_decision" and isinstance(session.verdict, Vague):
            return {
                "status": "vague",
                "alternatives": [a.raw for a in session.verdict.alternatives],
            }
        if session.status != "done":
            raise HTTPException(status_code=409, detail=f"no result while {session.status}")
        return {"status": "done", "result": result_as_dict(session.state.result)}

    @app.get("/sessions/{session_id}/costs")
    def get_costs(session_id: str):
        session = get_session(session_id)
        return session.ledger.report().as_dict()

    @app.get("/sessions/{session_id}/events")
    def get_events(session_id: str, since: int = 0):
        session = get_session(session_id)

        def stream():
            index = max(0, since)
            while True:
                with session.condition:
                    while index >= len(session.events) and session.status in (
                        "created", "running", "awaiting_decision",
                    ):
                        session.condition.wait(timeout=0.25)
                    pending = session.events[index:]
                    status = session.status
                for event in pending:
                    yield f"event: {event.get('type', 'message')}\ndata: {canonical_json(event)}\n\n"
                index += len(pending)
                if status in ("done", "aborted") and index >= len(session.events):
                    yield f"event: end\ndata: {canonical_json({'status': status})}\n\n"
                    return

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app


def serve(config: Config | None = None, host: str = "127.0.0.1", port: int = 8765):
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port, log_level="warning")
