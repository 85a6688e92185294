"""Command-line interface.

Subcommands: query (one-shot run with interactive decision prompts), serve
(HTTP service), registry list/validate, and replay (re-run a recorded
transcript and verify the outputs byte for byte).

Exit codes: 0 result produced, 2 vague query with alternatives, 1 abort or
error, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .api import Runner
from .config import ConfigError, load_config
from .filtering import PlanningError
from .gateway import GatewayError
from .registry import RegistryError, load_metadata_file
from .session import SessionAborted, SessionError
from .table import TableError
from .transcript import TranscriptError, replay_transcript, write_session_files

USAGE_EXIT = 64


class _CliParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(USAGE_EXIT)


class _Declined(Exception):
    """User declined to choose an alternative; treated as a vague outcome."""


def build_parser() -> argparse.ArgumentParser:
    parser = _CliParser(prog="semquery", description="semantic query engine")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_CliParser)

    query = sub.add_parser("query", help="answer one query over a data source")
    query.add_argument("text", help="the natural-language query")
    query.add_argument("--data", required=True, help="path to the data source")
    query.add_argument(
        "--description",
        action="append",
        required=True,
        help="data description; repeat NAME=TEXT entries for multi-column sources",
    )
    query.add_argument("--udf", action="append", default=[], help="UDF metadata file (repeatable)")
    query.add_argument("--config", help="config file path")
    query.add_argument("--out", help="directory for transcript and result files")
    query.add_argument("--non-interactive", action="store_true")

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--config", help="config file path")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8765)

    registry = sub.add_parser("registry", help="inspect or validate function metadata")
    registry_sub = registry.add_subparsers(dest="registry_command", required=True, parser_class=_CliParser)
    registry_list = registry_sub.add_parser("list", help="list registered functions")
    registry_list.add_argument("--config", help="config file path")
    registry_validate = registry_sub.add_parser("validate", help="validate UDF metadata files")
    registry_validate.add_argument("files", nargs="+", help="metadata files to validate")
    registry_validate.add_argument("--config", help="config file path")

    replay = sub.add_parser("replay", help="re-run a recorded transcript")
    replay.add_argument("transcript", help="transcript file")
    replay.add_argument("--out", help="directory for the replayed result files")
    return parser


def _parse_description(entries: list[str]):
    if len(entries) == 1 and "=" not in entries[0]:
        return entries[0]
    mapping = {}
    for entry in entries:
        if "=" not in entry:
            raise ConfigError(
                f"description entry {entry!r} is not NAME=TEXT; multi-column sources "
                "need one entry per column"
            )
        name, text = entry.split("=", 1)
        mapping[name] = text
    return mapping


def _interactive_decide(verdict: dict) -> dict:
    if verdict["verdict"] == "numeric_underspecified":
        print(verdict["warning"])
        while True:
            answer = input("[p]roceed or [r]especify? ").strip().lower()
            if answer in ("p", "proceed"):
                return {"action": "proceed"}
            if answer in ("r", "respecify"):
                new_query = input("new query: ").strip()
                if new_query:
                    return {"action": "respecify", "query": new_query}
    if verdict["verdict"] == "vague":
        print(f"The query is vague ({verdict['reason']}). Alternatives:")
        for i, text in enumerate(verdict["alternatives"]):
            print(f"  [{i}] {text}")
        answer = input("choose an alternative number (enter to stop): ").strip()
        if not answer:
            raise _Declined()
        return {"action": "choose_alternative", "index": int(answer)}
    raise _Declined()


def _print_events(event: dict) -> None:
    if event.get("type") == "stage":
        print(f"[stage] {event['stage']}: {event['status']}", file=sys.stderr)
    elif event.get("type") == "graph" and event.get("event") == "edge":
        print(
            f"[graph] {' + '.join(event['inputs'])} -> {event['output']} "
            f"({event['function']}, {event['kind']})",
            file=sys.stderr,
        )
    elif event.get("type") == "decision":
        print(f"[decision] {event['action']}", file=sys.stderr)


def _render_result(result) -> str:
    if result.is_scalar:
        return str(result.scalar)
    header = [name for name, _ in result.columns]
    widths = [len(h) for h in header]
    rendered_rows = []
    for row in result.rows:
        rendered = ["" if v is None else str(v) for v in row]
        widths = [max(w, len(cell)) for w, cell in zip(widths, rendered)]
        rendered_rows.append(rendered)
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(header, widths)),
        "  ".join("-" * w for w in widths),
    ]
    for rendered in rendered_rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(rendered, widths)))
    return "\n".join(lines)


def _cmd_query(args) -> int:
    config = load_config(args.config)
    udf_metadata = []
    for udf_path in args.udf:
        doc = json.loads(Path(udf_path).read_text(encoding="utf-8"))
        udf_metadata.extend(doc["functions"] if isinstance(doc, dict) and "functions" in doc else [doc])
    description = _parse_description(args.description)
    runner = Runner(config=config, udf_metadata=udf_metadata, emit=_print_events)
    decide = None if args.non_interactive else _interactive_decide
    try:
        run = runner.run(args.text, args.data, description, decide=decide)
    except _Declined:
        return 2
    if args.out:
        write_session_files(run, config, Path(args.out), udf_metadata=udf_metadata)
    if run.aborted_feedback is not None:
        print(run.aborted_feedback, file=sys.stderr)
        return 1
    if run.alternatives is not None:
        print("The query is vague. Alternatives:")
        for i, text in enumerate(run.alternatives):
            print(f"  [{i}] {text}")
        return 2
    print(_render_result(run.result))
    print("\ncosts:", file=sys.stderr)
    report = run.cost_report
    for stage in report["stages"]:
        print(
            f"  {stage['stage']:<14} prompt={stage['prompt_tokens']:<8} "
            f"completion={stage['completion_tokens']:<8} dollars={stage['dollars']:.6f}",
            file=sys.stderr,
        )
    print(f"  total dollars={report['total']['dollars']:.6f}", file=sys.stderr)
    return 0


def _cmd_registry(args) -> int:
    if args.registry_command == "list":
        config = load_config(args.config)
        registry = config.build_registry()
        for spec in registry.functions():
            print(f"{spec.id:<32} {'/'.join(spec.category_path):<24} {spec.display_name}")
        return 0
    config = load_config(args.config)
    registry = config.build_registry()
    status = 0
    for file in args.files:
        try:
            specs = load_metadata_file(registry, file)
        except RegistryError as exc:
            print(f"{file}: invalid: {exc}", file=sys.stderr)
            status = 1
        else:
            print(f"{file}: ok ({', '.join(s.id for s in specs)})")
    return status


def _cmd_replay(args) -> int:
    identical, differences = replay_transcript(
        args.transcript, Path(args.out) if args.out else None
    )
    if identical:
        print("replay identical")
        return 0
    for difference in differences:
        print(f"replay differs: {difference}", file=sys.stderr)
    return 1


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "query":
            return _cmd_query(args)
        if args.command == "serve":
            from .service import serve

            serve(load_config(args.config), host=args.host, port=args.port)
            return 0
        if args.command == "registry":
            return _cmd_registry(args)
        if args.command == "replay":
            return _cmd_replay(args)
    except SessionAborted as exc:
        print(exc.feedback, file=sys.stderr)
        return 1
    except (
        ConfigError,
        RegistryError,
        TranscriptError,
        PlanningError,
        SessionError,
        GatewayError,
        TableError,
        OSError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    parser.error(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
