"""Runtime configuration: YAML file, overridable via BITA_* env vars.

An env var BITA_<SECTION>_<KEY> overrides the matching config key, e.g.
BITA_PROVIDER_KIND=mock maps to provider.kind.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigInvalid


@dataclass
class ProviderSettings:
    kind: str = "mock"
    model: str = "mock-grounded"
    temperature: float = 0.0
    timeout_ms: int = 30000
    max_inflight: int = 4
    max_output_tokens: int = 2048
    credentials_env: str = ""
    base_url: str = ""
    allow_mock_fallback: bool = False
    context_limit_tokens: int = 120000


@dataclass
class AppConfig:
    bind: str = "127.0.0.1:8080"
    cors_origin: str = "*"
    static_dir: str | None = None
    corpus_dir: str | None = None
    budget_tokens: int = 8000
    top_k: int = 5
    store_path: str = "bita.db"
    provider: ProviderSettings = field(default_factory=ProviderSettings)

    def validate(self) -> None:
        if self.budget_tokens < 1:
            raise ConfigInvalid("prompt.budget_tokens must be positive")
        if self.top_k < 1:
            raise ConfigInvalid("retrieval.top_k must be >= 1")
        if not self.store_path:
            raise ConfigInvalid("store.path must be set")
        if not 0.0 <= self.provider.temperature <= 2.0:
            raise ConfigInvalid("provider.temperature must be in [0, 2]")
        if self.corpus_dir is not None and not Path(self.corpus_dir).is_dir():
            raise ConfigInvalid(f"corpus.dir does not exist: {self.corpus_dir}")


# (section, key) -> attribute on AppConfig / ProviderSettings
_KEY_MAP = {
    ("server", "bind"): "bind",
    ("server", "cors_origin"): "cors_origin",
    ("server", "static_dir"): "static_dir",
    ("corpus", "dir"): "corpus_dir",
    ("prompt", "budget_tokens"): "budget_tokens",
    ("retrieval", "top_k"): "top_k",
    ("store", "path"): "store_path",
}

_PROVIDER_FIELDS = {f.name: f.type for f in fields(ProviderSettings)}


def _coerce(value: Any, current: Any) -> Any:
    if isinstance(current, bool):
        if isinstance(value, bool):
            return value
        return str(value).strip().lower() in ("1", "true", "yes", "on")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(value)
    if isinstance(current, float):
        return float(value)
    if value is None:
        return None
    return str(value)


def _apply(config: AppConfig, section: str, key: str, value: Any) -> None:
    if section == "provider":
        if key not in _PROVIDER_FIELDS:
            raise ConfigInvalid(f"unknown config key provider.{key}")
        current = getattr(config.provider, key)
        setattr(config.provider, key, _coerce(value, current))
        return
    attr = _KEY_MAP.get((section, key))
    if attr is None:
        raise ConfigInvalid(f"unknown config key {section}.{key}")
    current = getattr(config, attr)
    setattr(config, attr, _coerce(value, current) if current is not None else value)


def load_config(
    path: str | Path | None = None, env: Mapping[str, str] | None = None
) -> AppConfig:
    """Build the runtime config from an optional YAML file plus env overrides."""
    config = AppConfig()
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigInvalid(f"config file not found: {path}") from None
        except yaml.YAMLError as exc:
            raise ConfigInvalid(f"config file is not valid YAML: {exc}") from exc
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigInvalid("config file must contain a mapping of sections")
        for section, entries in raw.items():
            if not isinstance(entries, dict):
                raise ConfigInvalid(f"config section '{section}' must be a mapping")
            for key, value in entries.items():
                _apply(config, str(section), str(key), value)

    env = os.environ if env is None else env
    for name, value in env.items():
        if not name.startswith("BITA_") or name == "BITA_":
            continue
        rest = name[len("BITA_") :]
        if "_" not in rest:
            continue
        section, key = rest.split("_", 1)
        try:
            _apply(config, section.lower(), key.lower(), value)
        except ConfigInvalid:
            raise ConfigInvalid(f"unrecognized env override {name}") from None

    config.validate()
    return config
