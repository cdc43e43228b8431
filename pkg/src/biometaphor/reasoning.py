"""Chat-completion backends: remote HTTP client and a scripted offline double."""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol

import httpx

from . import _http
from .errors import BackendError, ConfigurationError, FixtureError, FixtureMissError

log = logging.getLogger(__name__)

STEP_IDS = ("step1", "step2", "step3", "step4")
BACKEND_KINDS = ("remote", "scripted", "rule")


@dataclass(frozen=True)
class BackendConfig:
    """Connection settings for one reasoning backend.

    The credential itself is never held here, only the name of the
    environment variable that carries it.
    """

    backend_id: str
    endpoint_url: str = "https://api.openai.com/v1/chat/completions"
    model_name: str = "gpt-4o"
    temperature: float = 1.0
    max_tokens: int = 2048
    timeout_ms: int = 60_000
    max_retries: int = 2
    api_key_env: str = "OPENAI_API_KEY"
    kind: str = "remote"
    fixture: str | None = None  # scripted only: path or "builtin:<name>"
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if not self.backend_id:
            raise ConfigurationError("backend_id must be nonempty")
        if self.kind not in BACKEND_KINDS:
            raise ConfigurationError(f"unknown backend kind {self.kind!r}")
        if self.temperature < 0:
            raise ConfigurationError("temperature must be >= 0")
        for name in ("max_tokens", "timeout_ms", "max_in_flight"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.max_retries < 0:
            raise ConfigurationError("max_retries must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "backend_id": self.backend_id,
            "endpoint_url": self.endpoint_url,
            "model_name": self.model_name,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "timeout_ms": self.timeout_ms,
            "max_retries": self.max_retries,
            "api_key_env": self.api_key_env,
            "kind": self.kind,
            "fixture": self.fixture,
            "max_in_flight": self.max_in_flight,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> BackendConfig:
        if "api_key" in data:
            raise ConfigurationError(
                "inline api_key is not accepted; name an environment variable in api_key_env"
            )
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown backend fields: {sorted(unknown)}")
        return cls(**dict(data))


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion call.

    ``user_turns`` and ``assistant_turns`` interleave as
    user, assistant, user, ..., user. ``tags`` is request metadata (step,
    octant, scene, ...) used for routing by offline backends; it never goes
    over the wire.
    """

    system_text: str
    user_turns: tuple[str, ...]
    temperature: float
    max_tokens: int
    assistant_turns: tuple[str, ...] = ()
    tags: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "user_turns", tuple(self.user_turns))
        object.__setattr__(self, "assistant_turns", tuple(self.assistant_turns))
        object.__setattr__(self, "tags", tuple(sorted((str(k), str(v)) for k, v in dict(self.tags).items())))
        if not self.user_turns:
            raise ValueError("a chat request needs at least one user turn")
        if len(self.assistant_turns) != len(self.user_turns) - 1:
            raise ValueError("assistant turns must sit between consecutive user turns")
        if not (self.system_text + "".join(self.user_turns)).strip():
            raise ValueError("chat request text is empty")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    @property
    def tag_map(self) -> dict[str, str]:
        return dict(self.tags)

    def messages(self) -> list[dict[str, str]]:
        out = []
        if self.system_text:
            out.append({"role": "system", "content": self.system_text})
        for i, user in enumerate(self.user_turns):
            out.append({"role": "user", "content": user})
            if i < len(self.assistant_turns):
                out.append({"role": "assistant", "content": self.assistant_turns[i]})
        return out

    def to_dict(self) -> dict:
        return {
            "system_text": self.system_text,
            "user_turns": list(self.user_turns),
            "assistant_turns": list(self.assistant_turns),
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "tags": dict(self.tags),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> ChatRequest:
        return cls(
            system_text=data["system_text"],
            user_turns=tuple(data["user_turns"]),
            assistant_turns=tuple(data.get("assistant_turns", ())),
            temperature=data["temperature"],
            max_tokens=data["max_tokens"],
            tags=tuple(dict(data.get("tags", {})).items()),
        )


class ReasoningBackend(Protocol):
    config: BackendConfig

    @property
    def backend_id(self) -> str: ...

    def complete(self, request: ChatRequest) -> str: ...


class RemoteChatBackend:
    """Chat-completions client (messages/temperature/max_tokens JSON shape)."""

    def __init__(
        self,
        config: BackendConfig,
        *,
        transport: httpx.BaseTransport | None = None,
        sleep=None,
        rng=None,
    ) -> None:
        self.config = config
        self._transport = transport
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self._retry_kwargs = {}
        if sleep is not None:
            self._retry_kwargs["sleep"] = sleep
        if rng is not None:
            self._retry_kwargs["rng"] = rng

    @property
    def backend_id(self) -> str:
        return self.config.backend_id

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env)
        if not key:
            raise ConfigurationError(
                f"backend {self.config.backend_id!r}: environment variable "
                f"{self.config.api_key_env} is not set"
            )
        return key

    def payload(self, request: ChatRequest) -> dict:
        # the configured temperature wins over whatever the request carries
        return {
            "model": self.config.model_name,
            "messages": request.messages(),
            "temperature": self.config.temperature,
            "max_tokens": request.max_tokens,
        }

    def complete(self, request: ChatRequest) -> str:
        key = self._api_key()
        with self._slots:
            response = _http.post_json(
                self.config.endpoint_url,
                self.payload(request),
                headers={"Authorization": f"Bearer {key}"},
                timeout_s=self.config.timeout_ms / 1000.0,
                max_retries=self.config.max_retries,
                transport=self._transport,
                secret=key,
                **self._retry_kwargs,
            )
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            excerpt = _http.redact(response.text[:200], key)
            raise BackendError(
                f"unexpected completion payload from {self.config.backend_id}: {excerpt}",
                status=response.status_code,
                body_excerpt=excerpt,
            ) from exc


def complete(
    config: BackendConfig,
    request: ChatRequest,
    *,
    transport: httpx.BaseTransport | None = None,
) -> str:
    """One-shot completion against a remote backend."""
    return RemoteChatBackend(config, transport=transport).complete(request)


FixtureKey = tuple[str, str, str]


class _Pairs(list):
    pass


@dataclass(frozen=True)
class ScriptedFixture:
    """Canned responses keyed by (step_id, octant label, scene_id)."""

    responses: Mapping[FixtureKey, str] = field(default_factory=dict)

    @classmethod
    def from_items(cls, items: Iterable[tuple[FixtureKey, str]]) -> ScriptedFixture:
        table: dict[FixtureKey, str] = {}
        for key, text in items:
            key = tuple(key)
            if len(key) != 3:
                raise FixtureError(f"fixture key must have 3 parts, got {key!r}")
            if key in table:
                raise FixtureError(f"duplicate fixture key {'|'.join(key)!r}")
            table[key] = text
        return cls(table)

    @classmethod
    def from_json(cls, text: str) -> ScriptedFixture:
        # keep raw key/value pairs so duplicate keys surface instead of collapsing
        raw = json.loads(text, object_pairs_hook=_Pairs)
        if not isinstance(raw, _Pairs):
            raise FixtureError("fixture file must hold a JSON object")
        items = []
        for composite, value in raw:
            if composite.startswith("_"):  # metadata such as "_comment"
                continue
            if not isinstance(value, str):
                raise FixtureError(f"fixture value for {composite!r} must be a string")
            items.append((tuple(composite.split("|")), value))
        return cls.from_items(items)

    @classmethod
    def load(cls, path: str | Path) -> ScriptedFixture:
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def to_json(self) -> str:
        return json.dumps(
            {"|".join(k): v for k, v in sorted(self.responses.items())}, indent=1, ensure_ascii=False
        )

    def keys(self) -> set[FixtureKey]:
        return set(self.responses)

    def __len__(self) -> int:
        return len(self.responses)


def request_key(request: ChatRequest) -> FixtureKey:
    tags = request.tag_map
    try:
        return (tags["step"], tags["octant"], tags["scene"])
    except KeyError as exc:
        raise FixtureMissError(
            (tags.get("step", "?"), tags.get("octant", "?"), tags.get("scene", "?"))
        ) from exc


class ScriptedBackend:
    """Deterministic stand-in: returns the fixture text for the request key."""

    def __init__(self, fixture: ScriptedFixture, config: BackendConfig) -> None:
        self.fixture = fixture
        self.config = config

    @property
    def backend_id(self) -> str:
        return self.config.backend_id

    def complete(self, request: ChatRequest) -> str:
        key = request_key(request)
        try:
            return self.fixture.responses[key]
        except KeyError:
            raise FixtureMissError(key) from None


def make_scripted(
    fixture: ScriptedFixture, config: BackendConfig | None = None
) -> ScriptedBackend:
    if config is None:
        config = BackendConfig(backend_id="scripted", kind="scripted", model_name="scripted")
    return ScriptedBackend(fixture, config)


def builtin_fixture_path(name: str) -> Path:
    return Path(__file__).parent / "data" / "fixtures" / f"{name}.json"


def load_fixture(ref: str) -> ScriptedFixture:
    """Load ``builtin:<name>`` or a filesystem path."""
    if ref.startswith("builtin:"):
        path = builtin_fixture_path(ref.removeprefix("builtin:"))
    else:
        path = Path(ref)
    if not path.is_file():
        raise ConfigurationError(f"fixture not found: {ref}")
    return ScriptedFixture.load(path)
