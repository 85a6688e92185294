"""Declarative configuration: provider, prices, registry paths, policies.

The config file is a single JSON document; every field is optional and
validated at load time with a field-precise diagnostic. The default
configuration runs fully offline: mock provider, built-in registry, chain
replay mode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .gateway import CostLedger
from .providers import MockProvider, RemoteProvider, load_fixture_rules
from .registry import FunctionRegistry, load_metadata_file
from .session import EngineConfig


class ConfigError(Exception):
    pass


@dataclass
class ProviderConfig:
    kind: str = "mock"
    fixtures: str | None = None
    endpoint: str | None = None
    model: str | None = None
    api_key_env: str = "SEMQUERY_API_KEY"


@dataclass
class RegistryConfig:
    builtins: bool = True
    builtin_path: str | None = None
    udf_paths: list[str] = field(default_factory=list)


@dataclass
class Config:
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    prompt_price_per_1k: float = 0.0
    completion_price_per_1k: float = 0.0
    registry: RegistryConfig = field(default_factory=RegistryConfig)
    placeholder_quantiles: tuple[float, float] = (0.9, 0.1)
    alternatives_count: int = 3
    select_mode: str = "replay"
    alias_matcher: str = "deterministic"
    stage_select: str = "rules"
    tree_enabled: bool = True
    sample_rows: int = 3
    base_dir: Path = field(default_factory=Path.cwd)

    def _resolve(self, path_text: str) -> Path:
        path = Path(path_text)
        return path if path.is_absolute() else self.base_dir / path

    def build_provider(self):
        if self.provider.kind == "mock":
            rules = []
            if self.provider.fixtures:
                rules = load_fixture_rules(self._resolve(self.provider.fixtures))
            return MockProvider(rules)
        return RemoteProvider(
            endpoint=self.provider.endpoint,
            model=self.provider.model,
            api_key_env=self.provider.api_key_env,
        )

    def build_registry(self, udf_metadata: list[dict] | None = None) -> FunctionRegistry:
        from .registry import register_many

        registry = FunctionRegistry()
        if self.registry.builtins:
            if self.registry.builtin_path:
                load_metadata_file(registry, self._resolve(self.registry.builtin_path))
            else:
                load_builtin_catalog(registry)
        for udf_path in self.registry.udf_paths:
            load_metadata_file(registry, self._resolve(udf_path))
        if udf_metadata:
            register_many(registry, list(udf_metadata), source="udf_metadata")
        return registry

    def new_ledger(self) -> CostLedger:
        return CostLedger(self.prompt_price_per_1k, self.completion_price_per_1k)

    def engine_config(self) -> EngineConfig:
        return EngineConfig(
            select_mode=self.select_mode,
            alias_matcher=self.alias_matcher,
            stage_select=self.stage_select,
            tree_enabled=self.tree_enabled,
            placeholder_quantiles=self.placeholder_quantiles,
            sample_rows=self.sample_rows,
        )

    def snapshot(self) -> dict:
        """The parts of the config a transcript needs to replay a session."""
        return {
            "provider": {
                "kind": self.provider.kind,
                "fixtures": str(self._resolve(self.provider.fixtures))
                if self.provider.fixtures
                else None,
            },
            "prices": {
                "prompt_per_1k": self.prompt_price_per_1k,
                "completion_per_1k": self.completion_price_per_1k,
            },
            "registry": {
                "builtins": self.registry.builtins,
                "builtin_path": str(self._resolve(self.registry.builtin_path))
                if self.registry.builtin_path
                else None,
                "udf_paths": [str(self._resolve(p)) for p in self.registry.udf_paths],
            },
            "placeholder_quantiles": list(self.placeholder_quantiles),
            "alternatives_count": self.alternatives_count,
            "select_mode": self.select_mode,
            "alias_matcher": self.alias_matcher,
            "stage_select": self.stage_select,
            "tree_enabled": self.tree_enabled,
            "sample_rows": self.sample_rows,
        }


def load_builtin_catalog(registry: FunctionRegistry) -> None:
    source = resources.files("semquery").joinpath("data/builtin_functions.json")
    doc = json.loads(source.read_text(encoding="utf-8"))
    from .registry import register_metadata

    for entry in doc["functions"]:
        register_metadata(registry, entry, source="builtin_functions.json")


def _type_check(value, types, path: str, type_name: str, source: str):
    allowed = types if isinstance(types, tuple) else (types,)
    if not isinstance(value, allowed) or (isinstance(value, bool) and bool not in allowed):
        raise ConfigError(f"{source}: {path}: expected {type_name}")
    return value


def config_from_dict(doc: dict, source: str = "<config>", base_dir: Path | None = None) -> Config:
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: expected a JSON object")
    known = {
        "provider", "prices", "registry", "placeholder_quantiles", "alternatives_count",
        "select_mode", "alias_matcher", "stage_select", "tree_enabled", "sample_rows",
    }
    for key in doc:
        if key not in known:
            raise ConfigError(f"{source}: unknown field {key!r}")
    config = Config(base_dir=base_dir or Path.cwd())

    provider = doc.get("provider", {})
    _type_check(provider, dict, "provider", "an object", source)
    kind = provider.get("kind", "mock")
    if kind not in ("mock", "remote"):
        raise ConfigError(f"{source}: provider.kind: expected 'mock' or 'remote'")
    config.provider.kind = kind
    if kind == "mock":
        fixtures = provider.get("fixtures")
        if fixtures is not None:
            _type_check(fixtures, str, "provider.fixtures", "a path string", source)
        config.provider.fixtures = fixtures
    else:
        for required in ("endpoint", "model"):
            if required not in provider:
                raise ConfigError(f"{source}: provider.{required}: required for remote providers")
            _type_check(provider[required], str, f"provider.{required}", "a string", source)
        config.provider.endpoint = provider["endpoint"]
        config.provider.model = provider["model"]
        config.provider.api_key_env = _type_check(
            provider.get("api_key_env", "SEMQUERY_API_KEY"),
            str, "provider.api_key_env", "a string", source,
        )

    prices = doc.get("prices", {})
    _type_check(prices, dict, "prices", "an object", source)
    config.prompt_price_per_1k = float(
        _type_check(prices.get("prompt_per_1k", 0.0), (int, float), "prices.prompt_per_1k", "a number", source)
    )
    config.completion_price_per_1k = float(
        _type_check(prices.get("completion_per_1k", 0.0), (int, float), "prices.completion_per_1k", "a number", source)
    )

    registry = doc.get("registry", {})
    _type_check(registry, dict, "registry", "an object", source)
    config.registry.builtins = _type_check(
        registry.get("builtins", True), bool, "registry.builtins", "a boolean", source
    )
    builtin_path = registry.get("builtin_path")
    if builtin_path is not None:
        _type_check(builtin_path, str, "registry.builtin_path", "a path string", source)
    config.registry.builtin_path = builtin_path
    udf_paths = registry.get("udf_paths", [])
    _type_check(udf_paths, list, "registry.udf_paths", "a list of paths", source)
    for i, p in enumerate(udf_paths):
        _type_check(p, str, f"registry.udf_paths[{i}]", "a path string", source)
    config.registry.udf_paths = list(udf_paths)

    quantiles = doc.get("placeholder_quantiles", {})
    _type_check(quantiles, dict, "placeholder_quantiles", "an object", source)
    upper = _type_check(quantiles.get("upper", 0.9), (int, float), "placeholder_quantiles.upper", "a number", source)
    lower = _type_check(quantiles.get("lower", 0.1), (int, float), "placeholder_quantiles.lower", "a number", source)
    for name, q in (("upper", upper), ("lower", lower)):
        if not 0.0 <= q <= 1.0:
            raise ConfigError(f"{source}: placeholder_quantiles.{name}: must be within [0, 1]")
    config.placeholder_quantiles = (float(upper), float(lower))

    config.alternatives_count = _type_check(
        doc.get("alternatives_count", 3), int, "alternatives_count", "an integer", source
    )
    if config.alternatives_count < 1:
        raise ConfigError(f"{source}: alternatives_count: must be at least 1")

    for key, allowed in (
        ("select_mode", ("replay", "gateway")),
        ("alias_matcher", ("deterministic", "gateway")),
        ("stage_select", ("rules", "gateway")),
    ):
        value = doc.get(key, getattr(config, key))
        if value not in allowed:
            raise ConfigError(f"{source}: {key}: expected one of {allowed}")
        setattr(config, key, value)

    config.tree_enabled = _type_check(
        doc.get("tree_enabled", True), bool, "tree_enabled", "a boolean", source
    )
    config.sample_rows = _type_check(
        doc.get("sample_rows", 3), int, "sample_rows", "an integer", source
    )
    if config.sample_rows < 0:
        raise ConfigError(f"{source}: sample_rows: must be >= 0")
    return config


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config()
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: unreadable: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(doc, source=str(path), base_dir=path.parent.resolve())


def config_from_snapshot(snapshot: dict) -> Config:
    """Rebuild a runnable config from a transcript's config snapshot."""
    doc = {
        "provider": snapshot.get("provider", {"kind": "mock"}),
        "prices": snapshot.get("prices", {}),
        "registry": snapshot.get("registry", {}),
        "placeholder_quantiles": {
            "upper": snapshot.get("placeholder_quantiles", [0.9, 0.1])[0],
            "lower": snapshot.get("placeholder_quantiles", [0.9, 0.1])[1],
        },
        "alternatives_count": snapshot.get("alternatives_count", 3),
        "select_mode": snapshot.get("select_mode", "replay"),
        "alias_matcher": snapshot.get("alias_matcher", "deterministic"),
        "stage_select": snapshot.get("stage_select", "rules"),
        "tree_enabled": snapshot.get("tree_enabled", True),
        "sample_rows": snapshot.get("sample_rows", 3),
    }
    return config_from_dict(doc, source="<transcript snapshot>")
