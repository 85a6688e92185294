from __future__ import annotations

import json
from pathlib import Path

import pytest

from semquery.config import Config, load_builtin_catalog
from semquery.gateway import CostLedger, Gateway
from semquery.providers import MockProvider, load_fixture_rules
from semquery.registry import FunctionRegistry

DOG_WHISTLE_TWEETS = """\
The globalists are at it again, controlling everything behind the scenes.
Lovely sunny day at the park with the family.
Those thugs are ruining our neighborhoods.
I support the new community garden initiative.
The welfare queens keep gaming the system while we work.
Traffic was terrible this morning but the podcast was great.
Typical globalist agenda pushing us around.
Stuck inside watching the rain all afternoon.
"""

PERSUASION_POSTS = """\
You should switch because the evidence is overwhelming.
Trust me, it just works.
I read the source and it backs this claim.
No reason, I just feel it.
Because the data says so, switching saves money.
"""

MOOD_TWEETS = """\
Stuck inside watching the rain all day.
What a great sunny morning!
Feeling angry about the delayed train again.
Just a normal commute today.
I love this little coffee shop.
The storm knocked out our power.
"""

# Scripted mock responses for the vague use case; everything else falls
# through to the mock's deterministic defaults.
USE_CASE_RULES = {
    "rules": [
        {
            "stage": "filter",
            "task": "query_check",
            "match": {"contains": "economic indicators"},
            "respond": {
                "tool_call": {
                    "name": "report_query_check",
                    "arguments": {
                        "chain_exists": False,
                        "sql_answerable": False,
                        "requested_functions": [],
                        "unspecified_values": [],
                        "vague_reason": "data-insufficiency",
                    },
                }
            },
        },
        {
            "stage": "filter",
            "task": "alternatives",
            "match": {"contains": "economic indicators"},
            "respond": {
                "tool_call": {
                    "name": "propose_alternatives",
                    "arguments": {
                        "alternatives": [
                            "I want to compute the emotion distribution of the posts.",
                            "I want to count the posts that mention 'rain'.",
                            "I want to retrieve the posts with negative sentiment.",
                        ]
                    },
                }
            },
        },
    ]
}


@pytest.fixture(scope="session")
def registry() -> FunctionRegistry:
    reg = FunctionRegistry()
    load_builtin_catalog(reg)
    return reg


@pytest.fixture()
def mock_gateway():
    def make(rules=None, prompt_price=0.0, completion_price=0.0):
        ledger = CostLedger(prompt_price, completion_price)
        return Gateway(MockProvider(rules or []), ledger, sleep=lambda s: None)

    return make


@pytest.fixture()
def tweets_file(tmp_path: Path) -> Path:
    path = tmp_path / "tweets.txt"
    path.write_text(DOG_WHISTLE_TWEETS, encoding="utf-8")
    return path


@pytest.fixture()
def posts_file(tmp_path: Path) -> Path:
    path = tmp_path / "posts.txt"
    path.write_text(PERSUASION_POSTS, encoding="utf-8")
    return path


@pytest.fixture()
def mood_file(tmp_path: Path) -> Path:
    path = tmp_path / "mood.txt"
    path.write_text(MOOD_TWEETS, encoding="utf-8")
    return path


@pytest.fixture()
def use_case_rules_file(tmp_path: Path) -> Path:
    path = tmp_path / "fixtures.json"
    path.write_text(json.dumps(USE_CASE_RULES), encoding="utf-8")
    return path


@pytest.fixture()
def use_case_rules(use_case_rules_file):
    return load_fixture_rules(use_case_rules_file)


@pytest.fixture()
def mock_config(use_case_rules_file, tmp_path) -> Config:
    from semquery.config import config_from_dict

    return config_from_dict(
        {"provider": {"kind": "mock", "fixtures": str(use_case_rules_file)}},
        base_dir=tmp_path,
    )
