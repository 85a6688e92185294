"""Completion providers: a deterministic mock and a remote HTTP endpoint.

The mock is a pure function of (request, fixture rules). A fixtures file can
script responses for specific prompts; anything unscripted falls through to
deterministic defaults that plan from function trigger hints, match column
descriptions, and translate a few recognizable query shapes into SQL. That
keeps offline sessions reproducible end to end.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from pathlib import Path

import httpx

from .gateway import (
    CompletionRequest,
    GatewayError,
    RawCompletion,
    TokenUsage,
    TransportError,
    canonical_json,
    count_tokens,
    decode_payload,
)


@dataclass(frozen=True)
class FixtureRule:
    stage: str | None
    task: str | None
    contains: str | None
    regex: str | None
    content: str | None
    tool_name: str | None
    tool_arguments: dict | str | None

    def matches(self, request: CompletionRequest, payload: dict | None) -> bool:
        if self.stage is not None and request.stage_tag != self.stage:
            return False
        if self.task is not None and (payload is None or payload.get("task") != self.task):
            return False
        if self.contains is not None and self.contains not in request.user_text:
            return False
        if self.regex is not None and not re.search(self.regex, request.user_text):
            return False
        return True


def load_fixture_rules(path: str | Path) -> list[FixtureRule]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise GatewayError(f"fixtures file {path}: unreadable: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise GatewayError(f"fixtures file {path}: line {exc.lineno}: {exc.msg}") from exc
    rules = []
    for i, raw in enumerate(doc.get("rules", [])):
        respond = raw.get("respond", {})
        tool = respond.get("tool_call")
        match = raw.get("match", {})
        if "content" not in respond and tool is None:
            raise GatewayError(f"fixtures file {path}: rules[{i}]: respond needs content or tool_call")
        rules.append(
            FixtureRule(
                stage=raw.get("stage"),
                task=raw.get("task"),
                contains=match.get("contains"),
                regex=match.get("regex"),
                content=respond.get("content"),
                tool_name=tool.get("name") if tool else None,
                tool_arguments=tool.get("arguments") if tool else None,
            )
        )
    return rules


def _norm(text: str) -> str:
    return " ".join(text.casefold().split())


def _tokens(text: str) -> list[str]:
    return re.findall(r"[0-9a-z]+", text.casefold())


_STOPWORDS = {"the", "a", "an", "of", "each", "every", "all", "per", "for", "what", "is", "in"}


class MockProvider:
    """Scripted-first, defaults-second deterministic provider."""

    def __init__(self, rules: list[FixtureRule] | None = None):
        self.rules = list(rules or [])

    def complete(self, request: CompletionRequest) -> RawCompletion:
        payload = decode_payload(request.user_text)
        for rule in self.rules:
            if rule.matches(request, payload):
                return self._finish(request, rule.content, rule.tool_name, rule.tool_arguments)
        content, tool_name, tool_arguments = self._default(request, payload)
        return self._finish(request, content, tool_name, tool_arguments)

    def _finish(self, request, content, tool_name, tool_arguments) -> RawCompletion:
        if tool_name is not None:
            completion = count_tokens(
                canonical_json({"name": tool_name, "arguments": tool_arguments})
                if not isinstance(tool_arguments, str)
                else tool_arguments
            )
        else:
            completion = count_tokens(content or "")
        usage = TokenUsage(request.prompt_tokens(), completion)
        return RawCompletion(
            usage=usage, content=content, tool_name=tool_name, tool_arguments=tool_arguments
        )

    # -- deterministic defaults ------------------------------------------------

    def _default(self, request: CompletionRequest, payload: dict | None):
        task = (payload or {}).get("task")
        handler = {
            "query_check": self._query_check,
            "adequacy": self._adequacy,
            "alternatives": self._alternatives,
            "tree_descend": self._tree_descend,
            "select_call": self._select_call,
            "alias_judgment": self._alias_judgment,
            "generate_sql": self._generate_sql,
            "select_stage": self._select_stage,
        }.get(task)
        if handler is None:
            return "", None, None
        return handler(request, payload)

    def _query_check(self, request, payload):
        query = payload["query"]
        folded = query.casefold()
        hits = [
            fn["id"]
            for fn in payload["functions"]
            if any(hint.casefold() in folded for hint in fn["trigger_hints"])
        ]
        quoted = re.search(r"'[^']+'|\"[^\"]+\"", query) is not None
        has_number = re.search(r"\d", query) is not None
        chain_exists = bool(hits) or quoted
        unspecified = []
        if not has_number:
            unspecified = [
                fn["output_column"]
                for fn in payload["functions"]
                if fn["id"] in hits and fn["output_kind"] in ("integer", "real")
            ]
        arguments = {
            "chain_exists": chain_exists,
            "sql_answerable": chain_exists,
            "requested_functions": hits,
            "unspecified_values": unspecified,
            "vague_reason": None if chain_exists else "lack-of-context",
        }
        return None, "report_query_check", arguments

    def _adequacy(self, request, payload):
        columns = payload["columns"]
        adequate = all(
            any(
                _norm(required["description"]) == _norm(col["description"])
                or required["column"] == col["name"]
                for col in columns
            )
            for required in payload["required_outputs"]
        )
        return None, "report_adequacy", {"adequate": adequate}

    def _alternatives(self, request, payload):
        count = payload.get("count", 3)
        texts = [
            f"I want to compute the {fn['output_description']} for each row."
            for fn in payload["functions"][:count]
        ]
        return None, "propose_alternatives", {"alternatives": texts}

    def _tree_descend(self, request, payload):
        category_path = payload["target"].get("category_path", [])
        options = payload["options"]
        for option in options:
            if option["name"] in category_path:
                return None, option["name"], {}
        return None, options[0]["name"], {}

    def _select_call(self, request, payload):
        planned = payload.get("planned_next")
        allowed = {c.name for c in request.tool_candidates or ()}
        if planned and planned["id"] in allowed:
            return None, planned["id"], dict(planned["bindings"])
        return None, payload["stopper"], {}

    def _alias_judgment(self, request, payload):
        proposed = _norm(payload["proposed_description"])
        for col in payload["columns"]:
            if _norm(col["description"]) == proposed:
                return None, "report_alias", {"column": col["name"]}
        return None, "report_alias", {"column": None}

    def _select_stage(self, request, payload):
        if payload["cursor"] < payload["chain_length"]:
            stage = "table_generation"
        elif not payload["has_code"]:
            stage = "code_generation"
        elif not payload["has_result"]:
            stage = "code_execution"
        elif not payload.get("displayed"):
            stage = "result_display"
        else:
            stage = "done"
        return None, "select_stage", {"stage": stage}

    # -- NL2SQL defaults ---------------------------------------------------------

    def _generate_sql(self, request, payload):
        query = payload["query"]
        columns = payload["columns"]
        sql = (
            self._sql_for_unspecified(query, payload)
            or self._sql_for_keyword(query, columns)
            or self._sql_for_two_level_counts(query, columns)
            or self._sql_for_distribution(query, columns)
            or self._sql_for_comparison(query, columns)
            or "SELECT * FROM table"
        )
        return sql, None, None

    def _sql_for_unspecified(self, query, payload):
        unspecified = payload.get("unspecified_columns") or []
        if not unspecified:
            return None
        clauses = []
        for i, column in enumerate(unspecified):
            name = "X" if len(unspecified) == 1 else f"X{i + 1}"
            clauses.append(f"{column} > @{name}@")
        return "SELECT * FROM table WHERE " + " AND ".join(clauses)

    def _sql_for_keyword(self, query, columns):
        quoted = re.search(r"'([^']+)'|\"([^\"]+)\"", query)
        if not quoted:
            return None
        keyword = quoted.group(1) or quoted.group(2)
        text_column = next((c["name"] for c in columns if c["kind"] == "text"), None)
        if text_column is None:
            return None
        return f"SELECT * FROM table WHERE {text_column} LIKE '%{keyword.replace(chr(39), chr(39) * 2)}%'"

    def _sql_for_two_level_counts(self, query, columns):
        m = re.search(
            r"for each ([\w /'-]+?),.*?(?:number|count) of (?:each |every )?([\w /'-]+)",
            query,
            re.IGNORECASE,
        )
        if not m:
            return None
        first = self._resolve_column(m.group(1), columns)
        second = self._resolve_column(m.group(2), columns)
        if not first or not second or first == second:
            return None
        return (
            f"SELECT {first}, {second}, COUNT(*) AS count "
            f"FROM table GROUP BY {first}, {second}"
        )

    def _sql_for_distribution(self, query, columns):
        phrases = []
        m = re.search(r"distribution of (?:the )?([\w /'-]+)", query, re.IGNORECASE)
        if m:
            phrases.append(m.group(1))
        m = re.search(r"(?:the )?([\w'-]+) distribution", query, re.IGNORECASE)
        if m:
            phrases.append(m.group(1))
        for phrase in phrases:
            column = self._resolve_column(phrase, columns)
            if column:
                return f"SELECT {column}, COUNT({column}) AS count FROM table GROUP BY {column}"
        return None

    def _sql_for_comparison(self, query, columns):
        m = re.search(r"([\w /'-]+?)\s*(>=|<=|>|<)\s*(\d+(?:\.\d+)?)", query)
        if not m:
            return None
        column = self._resolve_column(m.group(1), columns, prefer_tail=True)
        if not column:
            return None
        return f"SELECT * FROM table WHERE {column} {m.group(2)} {m.group(3)}"

    @staticmethod
    def _resolve_column(phrase: str, columns, prefer_tail: bool = False) -> str | None:
        """Map a query phrase to a column by its head noun.

        Group-by phrases lead with the head noun; comparison phrases end with
        it, so the token scan order flips.
        """
        words = [w for w in _tokens(phrase) if w not in _STOPWORDS]
        if prefer_tail:
            words = list(reversed(words))
        for word in words:
            for col in columns:
                if col["name"].casefold() == word:
                    return col["name"]
            for col in columns:
                if word in _tokens(col["name"]):
                    return col["name"]
        return None


class RemoteProvider:
    """Chat-completion endpoint with tool calling; credentials via env var."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "SEMQUERY_API_KEY",
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def complete(self, request: CompletionRequest) -> RawCompletion:
        api_key = os.environ.get(self.api_key_env, "")
        if not api_key:
            raise GatewayError(f"missing credentials: set {self.api_key_env}")
        body = {
            "model": self.model,
            "temperature": request.temperature,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
        }
        if request.tool_candidates:
            body["tools"] = [
                {"type": "function", "function": {"name": c.name, "parameters": c.parameters}}
                for c in request.tool_candidates
            ]
        try:
            response = self._client.post(
                f"{self.endpoint}/chat/completions",
                json=body,
                headers={"Authorization": f"Bearer {api_key}"},
            )
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        if response.status_code >= 500 or response.status_code == 429:
            raise TransportError(f"provider returned {response.status_code}")
        if response.status_code != 200:
            raise GatewayError(f"provider returned {response.status_code}: {response.text[:200]}")
        doc = response.json()
        usage = TokenUsage(
            doc.get("usage", {}).get("prompt_tokens", 0),
            doc.get("usage", {}).get("completion_tokens", 0),
        )
        message = doc["choices"][0]["message"]
        tool_calls = message.get("tool_calls") or []
        if tool_calls:
            call = tool_calls[0]["function"]
            return RawCompletion(
                usage=usage, tool_name=call["name"], tool_arguments=call.get("arguments", "{}")
            )
        return RawCompletion(usage=usage, content=message.get("content") or "")
