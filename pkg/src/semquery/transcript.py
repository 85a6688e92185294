"""Session transcripts: persistence and deterministic replay.

One JSON transcript per session records the inputs, every verdict and
decision, stage history, graph events, generated SQL, the result files, and
the cost report. Replaying a transcript re-runs its inputs against the mock
provider and must reproduce the result files byte for byte.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

from .api import Runner, SessionRun
from .codegen import result_to_csv, result_to_json
from .config import Config, config_from_snapshot


class TranscriptError(Exception):
    pass


def build_transcript(run: SessionRun, config: Config) -> dict:
    result_files = {}
    if run.result is not None:
        result_files = {
            "result.json": result_to_json(run.result),
            "result.csv": result_to_csv(run.result),
        }
    stage_history = []
    generated_sql = None
    if run.state is not None:
        stage_history = [
            {"stage": e.stage.value, "outcome": e.outcome, "detail": e.detail}
            for e in run.state.progress.entries
        ]
        if run.state.code is not None:
            generated_sql = run.state.code.sql
    graph_events = run.state.graph.events if run.state is not None else []
    return {
        "session_id": run.session_id,
        "query": run.query,
        "data": {"source": run.data_source, "description": run.description},
        "udf_metadata": [],
        "config_snapshot": config.snapshot(),
        "verdicts": run.verdict_history,
        "decisions": run.decisions,
        "stage_history": stage_history,
        "graph_events": graph_events,
        "generated_sql": generated_sql,
        "alternatives": run.alternatives,
        "aborted_feedback": run.aborted_feedback,
        "outcome": run.outcome(),
        "result_files": result_files,
        "cost_report": run.cost_report,
        "timestamps": {"started": run.started_at, "finished": run.finished_at or time.time()},
    }


def write_session_files(
    run: SessionRun, config: Config, out_dir: Path, udf_metadata: list[dict] | None = None
) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    transcript = build_transcript(run, config)
    if udf_metadata:
        transcript["udf_metadata"] = udf_metadata
    transcript_path = out_dir / f"{run.session_id}.transcript.json"
    transcript_path.write_text(
        json.dumps(transcript, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    for name, content in transcript["result_files"].items():
        (out_dir / f"{run.session_id}.{name}").write_text(content, encoding="utf-8")
    return transcript_path


def load_transcript(path: str | Path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise TranscriptError(f"{path}: unreadable: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise TranscriptError(f"{path}: line {exc.lineno}: {exc.msg}") from exc


def replay_transcript(path: str | Path, out_dir: Path | None = None) -> tuple[bool, list[str]]:
    """Re-run a recorded session against the mock and compare outputs.

    Returns (identical, differences). Only mock-provider transcripts are
    replayable; the comparison covers the final verdict, the alternatives
    list, and the rendered result files.
    """
    doc = load_transcript(path)
    snapshot = doc.get("config_snapshot", {})
    if snapshot.get("provider", {}).get("kind") != "mock":
        raise TranscriptError("only mock-provider transcripts can be replayed")
    config = config_from_snapshot(snapshot)

    decisions = list(doc.get("decisions", []))

    def scripted_decide(verdict: dict) -> dict:
        if not decisions:
            raise TranscriptError("transcript ran out of recorded decisions")
        return decisions.pop(0)

    runner = Runner(
        config=config,
        udf_metadata=doc.get("udf_metadata") or [],
        session_id=doc.get("session_id"),
    )
    run = runner.run(
        doc["query"],
        doc["data"]["source"],
        _description_from(doc["data"]["description"]),
        decide=scripted_decide if doc.get("decisions") else None,
    )

    differences: list[str] = []
    replayed = build_transcript(run, config)
    for key in ("verdicts", "alternatives", "aborted_feedback", "outcome", "generated_sql"):
        if replayed.get(key) != doc.get(key):
            differences.append(f"{key} differs")
    recorded_files = doc.get("result_files", {})
    for name, content in recorded_files.items():
        new_content = replayed["result_files"].get(name)
        if new_content is None:
            differences.append(f"{name}: missing from replay")
        elif new_content != content:
            differences.append(f"{name}: replayed bytes differ")
    for name in replayed["result_files"]:
        if name not in recorded_files:
            differences.append(f"{name}: not present in the recorded session")

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, content in replayed["result_files"].items():
            (out_dir / f"{run.session_id}.{name}").write_text(content, encoding="utf-8")
    return (not differences), differences


def _description_from(raw):
    # JSON round-trips both accepted description shapes unchanged.
    return raw
