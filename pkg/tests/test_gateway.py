from __future__ import annotations

import json
import random

import httpx
import pytest

from semquery.gateway import (
    CompletionRequest,
    CostLedger,
    Gateway,
    GatewayError,
    RawCompletion,
    TokenUsage,
    ToolCandidate,
    TransportError,
    canonical_json,
    count_tokens,
    encode_payload,
)
from semquery.providers import FixtureRule, MockProvider, RemoteProvider, load_fixture_rules


def make_request(user_text="hello there", stage="filter", candidates=None):
    return CompletionRequest(
        stage_tag=stage,
        system_text="system",
        user_text=user_text,
        tool_candidates=candidates,
    )


class TestTokenCounting:
    def test_four_characters_per_token_rounded_up(self):
        assert count_tokens("") == 0
        assert count_tokens("abcd") == 1
        assert count_tokens("abcde") == 2

    def test_prompt_tokens_include_candidates(self):
        candidate = ToolCandidate("f", {"type": "object"})
        request = make_request(candidates=(candidate,))
        expected = (
            count_tokens("system")
            + count_tokens("hello there")
            + count_tokens(candidate.serialized())
        )
        assert request.prompt_tokens() == expected


class TestMockProvider:
    def test_fixture_rule_wins_over_default(self):
        rules = [
            FixtureRule(
                stage="filter", task=None, contains="emotion distribution", regex=None,
                content=None, tool_name="select_function",
                tool_arguments={"id": "emotion_classifier"},
            )
        ]
        provider = MockProvider(rules)
        raw = provider.complete(make_request("please compute the emotion distribution"))
        assert raw.tool_name == "select_function"
        assert raw.tool_arguments == {"id": "emotion_classifier"}

    def test_without_candidates_or_rules_returns_content(self):
        raw = MockProvider().complete(make_request("anything"))
        assert raw.tool_name is None
        assert raw.content == ""

    def test_determinism(self):
        provider = MockProvider()
        request = make_request(
            encode_payload("check", {"task": "query_check", "query": "q", "functions": [], "columns": []})
        )
        first = provider.complete(request)
        second = provider.complete(request)
        assert first == second

    def test_rules_file_validation(self, tmp_path):
        path = tmp_path / "rules.json"
        path.write_text(json.dumps({"rules": [{"match": {"contains": "x"}}]}), encoding="utf-8")
        with pytest.raises(GatewayError, match="respond"):
            load_fixture_rules(path)


class TestGateway:
    def test_every_complete_adds_one_ledger_entry(self):
        ledger = CostLedger()
        gateway = Gateway(MockProvider(), ledger, sleep=lambda s: None)
        gateway.complete(make_request())
        gateway.complete(make_request(stage="code-gen"))
        assert len(ledger.entries) == 2
        assert [e.stage_tag for e in ledger.entries] == ["filter", "code-gen"]

    def test_transport_retries_then_succeeds(self):
        attempts = []

        class Flaky:
            def complete(self, request):
                attempts.append(1)
                if len(attempts) < 3:
                    raise TransportError("boom")
                return RawCompletion(usage=TokenUsage(1, 1), content="ok")

        slept = []
        gateway = Gateway(Flaky(), CostLedger(), sleep=slept.append)
        response = gateway.complete(make_request())
        assert response.content == "ok"
        assert len(attempts) == 3
        assert slept == [0.2, 0.4]

    def test_transport_exhaustion_is_hard_error(self):
        class Dead:
            def complete(self, request):
                raise TransportError("down")

        gateway = Gateway(Dead(), CostLedger(), sleep=lambda s: None)
        with pytest.raises(GatewayError, match="after 3 attempts"):
            gateway.complete(make_request())

    def test_malformed_tool_arguments_reprompts_once(self):
        calls = []

        class Malformed:
            def complete(self, request):
                calls.append(request.user_text)
                return RawCompletion(
                    usage=TokenUsage(2, 2), tool_name="f", tool_arguments="not json"
                )

        ledger = CostLedger()
        gateway = Gateway(Malformed(), ledger, sleep=lambda s: None)
        with pytest.raises(GatewayError, match="malformed tool arguments"):
            gateway.complete(make_request())
        assert len(calls) == 2
        assert "not valid JSON" in calls[1]
        # both exchanges are charged to the one request
        assert len(ledger.entries) == 1
        assert ledger.entries[0].usage == TokenUsage(4, 4)

    def test_malformed_then_recovered(self):
        class Recovers:
            def __init__(self):
                self.n = 0

            def complete(self, request):
                self.n += 1
                args = "broken" if self.n == 1 else '{"a": 1}'
                return RawCompletion(usage=TokenUsage(1, 1), tool_name="f", tool_arguments=args)

        gateway = Gateway(Recovers(), CostLedger(), sleep=lambda s: None)
        response = gateway.complete(make_request())
        assert response.tool_call.arguments == {"a": 1}


class TestCostLedger:
    def test_example_arithmetic(self):
        # 1500 prompt and 100 completion tokens at (0.03, 0.06) per 1K:
        # 0.03 * 1.5 + 0.06 * 0.1 = 0.051
        ledger = CostLedger(0.03, 0.06)
        ledger.record("table-gen", TokenUsage(1000, 0))
        ledger.record("table-gen", TokenUsage(500, 100))
        cost = ledger.stage_cost("table-gen")
        assert cost.dollars == pytest.approx(0.051, abs=1e-12)

    def test_empty_ledger_reports_zero(self):
        report = CostLedger().report()
        assert report.total_dollars == 0.0
        assert [s.stage_tag for s in report.stages] == [
            "filter", "stage-select", "table-gen", "code-gen",
        ]
        assert all(s.prompt_tokens == 0 for s in report.stages)

    def test_unknown_stage_rejected(self):
        with pytest.raises(GatewayError):
            CostLedger().record("mystery", TokenUsage(1, 1))

    def test_random_ledgers_match_formula(self):
        rng = random.Random(5)
        for _ in range(100):
            p_in = rng.uniform(0, 0.2)
            p_out = rng.uniform(0, 0.4)
            ledger = CostLedger(p_in, p_out)
            expected_total = 0.0
            for _ in range(rng.randint(1, 20)):
                stage = rng.choice(["filter", "stage-select", "table-gen", "code-gen"])
                usage = TokenUsage(rng.randint(0, 5000), rng.randint(0, 2000))
                ledger.record(stage, usage)
                expected_total += (
                    usage.prompt_tokens / 1000 * p_in + usage.completion_tokens / 1000 * p_out
                )
            report = ledger.report()
            for stage_cost in report.stages:
                again = sum(
                    e.usage.prompt_tokens / 1000 * p_in + e.usage.completion_tokens / 1000 * p_out
                    for e in ledger.entries
                    if e.stage_tag == stage_cost.stage_tag
                )
                assert abs(stage_cost.dollars - again) <= 1e-9
            assert abs(report.total_dollars - expected_total) <= 1e-9

    def test_render_lists_stages_in_pipeline_order(self):
        text = CostLedger().report().render()
        lines = text.splitlines()
        assert lines[1].startswith("filter")
        assert lines[2].startswith("stage-select")
        assert lines[3].startswith("table-gen")
        assert lines[4].startswith("code-gen")
        assert lines[5].startswith("total")


class TestRemoteProvider:
    def _provider(self, handler, monkeypatch):
        monkeypatch.setenv("SEMQUERY_API_KEY", "k")
        transport = httpx.MockTransport(handler)
        return RemoteProvider("https://api.example/v1", "m-1", transport=transport)

    def test_parses_content_and_usage(self, monkeypatch):
        def handler(request):
            body = json.loads(request.content)
            assert body["model"] == "m-1"
            assert request.headers["authorization"] == "Bearer k"
            return httpx.Response(
                200,
                json={
                    "choices": [{"message": {"content": "hi"}}],
                    "usage": {"prompt_tokens": 7, "completion_tokens": 2},
                },
            )

        raw = self._provider(handler, monkeypatch).complete(make_request())
        assert raw.content == "hi"
        assert raw.usage == TokenUsage(7, 2)

    def test_parses_tool_call_arguments_as_raw_string(self, monkeypatch):
        def handler(request):
            return httpx.Response(
                200,
                json={
                    "choices": [
                        {
                            "message": {
                                "tool_calls": [
                                    {"function": {"name": "f", "arguments": '{"x": 1}'}}
                                ]
                            }
                        }
                    ],
                    "usage": {"prompt_tokens": 1, "completion_tokens": 1},
                },
            )

        raw = self._provider(handler, monkeypatch).complete(make_request())
        assert raw.tool_name == "f"
        assert raw.tool_arguments == '{"x": 1}'

    def test_server_errors_are_retryable(self, monkeypatch):
        def handler(request):
            return httpx.Response(503)

        with pytest.raises(TransportError):
            self._provider(handler, monkeypatch).complete(make_request())

    def test_missing_credentials(self, monkeypatch):
        monkeypatch.delenv("SEMQUERY_API_KEY", raising=False)
        provider = RemoteProvider("https://api.example", "m")
        with pytest.raises(GatewayError, match="SEMQUERY_API_KEY"):
            provider.complete(make_request())


def test_payload_round_trip():
    from semquery.gateway import decode_payload

    text = encode_payload("do the thing", {"task": "x", "n": 3})
    assert decode_payload(text) == {"task": "x", "n": 3}
    assert decode_payload(text + "\nnote: retry") == {"task": "x", "n": 3}
    assert decode_payload("no payload here") is None


def test_canonical_json_is_stable():
    assert canonical_json({"b": 1, "a": [2, 3]}) == '{"a":[2,3],"b":1}'
