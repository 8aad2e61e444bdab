"""Service configuration (TOML) and assembly of a runnable service."""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Any, Mapping
from zoneinfo import ZoneInfo

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .engine import (
    DEFAULT_IDLE_TIMEOUT,
    DEFAULT_RETRY_BUDGET,
    DEFAULT_TURN_CAP,
    ConversationEngine,
    Session,
)
from .gateway import CompletionProvider, HttpChatProvider, ProviderConfig, ScriptedProvider
from .pipeline import run_pipeline
from .protocol import ProtocolConfig, default_protocol, load_protocol
from .safety import ScrubRegistry
from .store import Store


class ConfigError(Exception):
    """Configuration file missing, unreadable, or invalid."""


@dataclass(frozen=True)
class ServiceConfig:
    """Everything needed to run the service, parsed from one TOML file."""

    store_path: str = ":memory:"
    host: str = "127.0.0.1"
    port: int = 8000
    timezone: str = "UTC"
    protocol_path: str | None = None
    clinician_tokens: tuple[str, ...] = ()
    provider_mode: str = "http"  # "http" or "scripted"
    provider: ProviderConfig = field(
        default_factory=lambda: ProviderConfig(
            endpoint="http://localhost:11434/v1/chat/completions", model="unset"
        )
    )
    script_path: str | None = None
    engine_retry_budget: int = DEFAULT_RETRY_BUDGET
    turn_cap: int = DEFAULT_TURN_CAP
    idle_timeout: timedelta = DEFAULT_IDLE_TIMEOUT

    def today(self) -> date:
        return datetime.now(ZoneInfo(self.timezone)).date()


def _section(raw: Mapping[str, Any], name: str) -> Mapping[str, Any]:
    value = raw.get(name, {})
    if not isinstance(value, Mapping):
        raise ConfigError(f"[{name}] must be a table")
    return value


def parse_config(raw: Mapping[str, Any]) -> ServiceConfig:
    service = _section(raw, "service")
    provider = _section(raw, "provider")
    engine = _section(raw, "engine")
    auth = _section(raw, "auth")

    mode = str(provider.get("mode", "http"))
    if mode not in ("http", "scripted"):
        raise ConfigError(f"provider.mode must be 'http' or 'scripted', got {mode!r}")
    if mode == "scripted" and not provider.get("script_path"):
        raise ConfigError("provider.mode = 'scripted' requires provider.script_path")

    provider_config = ProviderConfig(
        endpoint=str(provider.get("endpoint", "")),
        model=str(provider.get("model", "")),
        credential_env=str(provider.get("credential_env", "RPM_CHECKIN_API_KEY")),
        timeout_s=float(provider.get("timeout_s", 30.0)),
        retry_budget=int(provider.get("retry_budget", 2)),
    )
    tokens = auth.get("clinician_tokens", [])
    if not isinstance(tokens, list):
        raise ConfigError("auth.clinician_tokens must be a list of strings")

    return ServiceConfig(
        store_path=str(service.get("store_path", ":memory:")),
        host=str(service.get("host", "127.0.0.1")),
        port=int(service.get("port", 8000)),
        timezone=str(service.get("timezone", "UTC")),
        protocol_path=(
            str(service["protocol_path"]) if service.get("protocol_path") else None
        ),
        clinician_tokens=tuple(str(t) for t in tokens),
        provider_mode=mode,
        provider=provider_config,
        script_path=(
            str(provider["script_path"]) if provider.get("script_path") else None
        ),
        engine_retry_budget=int(engine.get("retry_budget", DEFAULT_RETRY_BUDGET)),
        turn_cap=int(engine.get("turn_cap", DEFAULT_TURN_CAP)),
        idle_timeout=timedelta(
            minutes=float(engine.get("idle_timeout_minutes", 30.0))
        ),
    )


def load_config(path: str | Path) -> ServiceConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc
    return parse_config(raw)


class Service:
    """A wired service: store, provider, engine, and the close-time pipeline."""

    def __init__(
        self,
        config: ServiceConfig,
        *,
        provider: CompletionProvider | None = None,
        store: Store | None = None,
        protocol: ProtocolConfig | None = None,
    ) -> None:
        self.config = config
        self.protocol = protocol or (
            load_protocol(config.protocol_path)
            if config.protocol_path
            else default_protocol()
        )
        self.store = store or Store(config.store_path)
        if provider is not None:
            self.provider = provider
        elif config.provider_mode == "scripted":
            self.provider = ScriptedProvider.from_file(config.script_path or "")
        else:
            self.provider = HttpChatProvider(config.provider)
        self.engine = ConversationEngine(
            self.protocol,
            self.provider,
            self.store,
            retry_budget=config.engine_retry_budget,
            turn_cap=config.turn_cap,
            idle_timeout=config.idle_timeout,
        )
        self.refresh_scrub_registry()
        self.engine.on_close.append(self._run_pipeline)

    def refresh_scrub_registry(self) -> None:
        """Rebuild the outbound identifier registry from stored patients.

        Call after enrolling patients so their names/DOBs are scrubbed."""
        registry = ScrubRegistry.build(
            (p.display_name, p.date_of_birth) for p in self.store.all_patients()
        )
        self.engine.scrub_registry = registry
        self.scrub_registry = registry

    def _run_pipeline(self, session: Session) -> None:
        run_pipeline(
            session,
            self.provider,
            self.protocol,
            self.store,
            registry=self.scrub_registry,
        )
