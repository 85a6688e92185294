"""Uniform interface to completion providers, with per-stage cost accounting.

Every model exchange is tagged with the pipeline stage that issued it, so the
ledger can break usage and dollar cost down by stage. Providers are pluggable:
a deterministic mock for tests and offline runs, or a remote chat-completion
endpoint.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

PIPELINE_STAGES = ("filter", "stage-select", "table-gen", "code-gen")


class GatewayError(Exception):
    """Hard completion failure (exhausted retries or unusable response)."""


class TransportError(GatewayError):
    """Retryable transport-level failure while reaching a provider."""


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def count_tokens(text: str) -> int:
    """Deterministic token proxy: one token per four characters, rounded up."""
    return (len(text) + 3) // 4


@dataclass(frozen=True)
class ToolCandidate:
    name: str
    parameters: dict

    def serialized(self) -> str:
        return canonical_json({"name": self.name, "parameters": self.parameters})


@dataclass(frozen=True)
class CompletionRequest:
    stage_tag: str
    system_text: str
    user_text: str
    tool_candidates: tuple[ToolCandidate, ...] | None = None
    temperature: float = 0.0

    def __post_init__(self):
        if self.stage_tag not in PIPELINE_STAGES:
            raise GatewayError(f"unknown stage tag {self.stage_tag!r}")
        if not 0.0 <= self.temperature <= 1.0:
            raise GatewayError("temperature must be within [0, 1]")

    def prompt_tokens(self) -> int:
        total = count_tokens(self.system_text) + count_tokens(self.user_text)
        for candidate in self.tool_candidates or ():
            total += count_tokens(candidate.serialized())
        return total


@dataclass(frozen=True)
class ToolCall:
    name: str
    arguments: dict


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise GatewayError("token counts must be non-negative")

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.prompt_tokens + other.prompt_tokens,
            self.completion_tokens + other.completion_tokens,
        )


@dataclass(frozen=True)
class CompletionResponse:
    usage: TokenUsage
    content: str | None = None
    tool_call: ToolCall | None = None


@dataclass(frozen=True)
class RawCompletion:
    """Provider-level exchange before tool-argument validation.

    tool_arguments may be a dict (already structured) or a raw JSON string
    that still needs parsing; remote APIs return the latter.
    """

    usage: TokenUsage
    content: str | None = None
    tool_name: str | None = None
    tool_arguments: dict | str | None = None


@dataclass(frozen=True)
class LedgerEntry:
    stage_tag: str
    usage: TokenUsage
    dollars: float


@dataclass
class StageCost:
    stage_tag: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    dollars: float = 0.0
    requests: int = 0


class CostLedger:
    """Accumulates one entry per completed exchange, priced per 1K tokens."""

    def __init__(self, prompt_price_per_1k: float = 0.0, completion_price_per_1k: float = 0.0):
        self.prompt_price_per_1k = prompt_price_per_1k
        self.completion_price_per_1k = completion_price_per_1k
        self.entries: list[LedgerEntry] = []

    def price(self, usage: TokenUsage) -> float:
        return (
            usage.prompt_tokens / 1000.0 * self.prompt_price_per_1k
            + usage.completion_tokens / 1000.0 * self.completion_price_per_1k
        )

    def record(self, stage_tag: str, usage: TokenUsage) -> LedgerEntry:
        if stage_tag not in PIPELINE_STAGES:
            raise GatewayError(f"unknown stage tag {stage_tag!r}")
        entry = LedgerEntry(stage_tag, usage, self.price(usage))
        self.entries.append(entry)
        return entry

    def stage_cost(self, stage_tag: str) -> StageCost:
        cost = StageCost(stage_tag)
        for entry in self.entries:
            if entry.stage_tag == stage_tag:
                cost.prompt_tokens += entry.usage.prompt_tokens
                cost.completion_tokens += entry.usage.completion_tokens
                cost.dollars += entry.dollars
                cost.requests += 1
        return cost

    def report(self) -> "CostReport":
        stages = [self.stage_cost(tag) for tag in PIPELINE_STAGES]
        return CostReport(stages)


@dataclass
class CostReport:
    """Per-stage totals in pipeline order, plus the grand total."""

    stages: list[StageCost]

    @property
    def total_dollars(self) -> float:
        return sum(s.dollars for s in self.stages)

    @property
    def total_prompt_tokens(self) -> int:
        return sum(s.prompt_tokens for s in self.stages)

    @property
    def total_completion_tokens(self) -> int:
        return sum(s.completion_tokens for s in self.stages)

    def as_dict(self) -> dict:
        return {
            "stages": [
                {
                    "stage": s.stage_tag,
                    "requests": s.requests,
                    "prompt_tokens": s.prompt_tokens,
                    "completion_tokens": s.completion_tokens,
                    "dollars": s.dollars,
                }
                for s in self.stages
            ],
            "total": {
                "prompt_tokens": self.total_prompt_tokens,
                "completion_tokens": self.total_completion_tokens,
                "dollars": self.total_dollars,
            },
        }

    def render(self) -> str:
        lines = [f"{'stage':<14}{'requests':>9}{'prompt':>9}{'completion':>12}{'dollars':>12}"]
        for s in self.stages:
            lines.append(
                f"{s.stage_tag:<14}{s.requests:>9}{s.prompt_tokens:>9}"
                f"{s.completion_tokens:>12}{s.dollars:>12.6f}"
            )
        lines.append(
            f"{'total':<14}{sum(s.requests for s in self.stages):>9}"
            f"{self.total_prompt_tokens:>9}{self.total_completion_tokens:>12}"
            f"{self.total_dollars:>12.6f}"
        )
        return "\n".join(lines)


_PAYLOAD_PREFIX = "payload: "


def encode_payload(instruction: str, payload: dict) -> str:
    """Render a prompt whose machine-readable payload providers can parse back."""
    return f"{instruction}\n{_PAYLOAD_PREFIX}{canonical_json(payload)}"


def decode_payload(user_text: str) -> dict | None:
    for line in user_text.splitlines():
        if line.startswith(_PAYLOAD_PREFIX):
            try:
                return json.loads(line[len(_PAYLOAD_PREFIX):])
            except json.JSONDecodeError:
                return None
    return None


class Gateway:
    """Routes requests to the configured provider and meters every exchange.

    Transport failures are retried up to three attempts with exponential
    backoff. A tool call whose arguments fail to parse triggers exactly one
    corrective re-prompt before a hard error; the tokens of both exchanges
    are charged to the request's single ledger entry.
    """

    MAX_ATTEMPTS = 3
    BACKOFF_SECONDS = 0.2

    def __init__(self, provider, ledger: CostLedger, sleep=time.sleep):
        self.provider = provider
        self.ledger = ledger
        self._sleep = sleep

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        used = TokenUsage()
        exchanged = False
        try:
            raw, used = self._attempt(request, used)
            exchanged = True
            if isinstance(raw.tool_arguments, str):
                try:
                    arguments = json.loads(raw.tool_arguments)
                except json.JSONDecodeError:
                    retry = CompletionRequest(
                        stage_tag=request.stage_tag,
                        system_text=request.system_text,
                        user_text=request.user_text
                        + "\nnote: the previous tool arguments were not valid JSON; answer again.",
                        tool_candidates=request.tool_candidates,
                        temperature=request.temperature,
                    )
                    raw, used = self._attempt(retry, used)
                    if isinstance(raw.tool_arguments, str):
                        try:
                            arguments = json.loads(raw.tool_arguments)
                        except json.JSONDecodeError:
                            raise GatewayError(
                                "malformed tool arguments after one corrective re-prompt"
                            ) from None
                    else:
                        arguments = raw.tool_arguments
            else:
                arguments = raw.tool_arguments
        finally:
            if exchanged:
                self.ledger.record(request.stage_tag, used)
        tool_call = ToolCall(raw.tool_name, arguments) if raw.tool_name is not None else None
        return CompletionResponse(usage=used, content=raw.content, tool_call=tool_call)

    def _attempt(self, request: CompletionRequest, used: TokenUsage) -> tuple[RawCompletion, TokenUsage]:
        last_error: TransportError | None = None
        for attempt in range(self.MAX_ATTEMPTS):
            try:
                raw = self.provider.complete(request)
                return raw, used + raw.usage
            except TransportError as exc:
                last_error = exc
                if attempt + 1 < self.MAX_ATTEMPTS:
                    self._sleep(self.BACKOFF_SECONDS * 2**attempt)
        raise GatewayError(f"transport failed after {self.MAX_ATTEMPTS} attempts: {last_error}")
