"""Text-to-panorama generation: remote HTTP backend and a hash-seeded stub."""

from __future__ import annotations

import base64
import binascii
import dataclasses
import hashlib
import io
import os
import threading
from dataclasses import dataclass
from typing import Final, Mapping, Protocol

import httpx
from PIL import Image

from . import _http
from .errors import BackendError, ConfigurationError, ImageValidationError

DEFAULT_WIDTH: Final[int] = 2048
DEFAULT_HEIGHT: Final[int] = 1024
DEFAULT_INIT_STRENGTH: Final[float] = 0.55
MAX_SEED: Final[int] = 2**64 - 1
FORMATS: Final[tuple[str, ...]] = ("png", "jpeg")

# stub pattern resolution before nearest-neighbour upscaling
_STUB_GRID: Final[tuple[int, int]] = (32, 16)


@dataclass(frozen=True)
class GenerationRequest:
    prompt_text: str
    seed: int
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    panorama: bool = True
    init_image: str | None = None  # base64 payload of the anchor image
    init_strength: float | None = None

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.prompt_text, str) or not self.prompt_text.strip():
            raise ImageValidationError("prompt_text must be nonempty")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed <= MAX_SEED:
            raise ImageValidationError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if self.width < 1 or self.height < 1:
            raise ImageValidationError("width and height must be positive")
        if self.panorama and self.width != 2 * self.height:
            raise ImageValidationError(
                f"panorama must be 2:1 (width == 2 x height), got {self.width}x{self.height}"
            )
        if (self.init_image is None) != (self.init_strength is None):
            raise ImageValidationError("init_strength must be given exactly when init_image is")
        if self.init_strength is not None and not 0.0 <= self.init_strength <= 1.0:
            raise ImageValidationError("init_strength must lie in [0, 1]")

    def to_dict(self, include_image: bool = False) -> dict:
        out = {
            "prompt_text": self.prompt_text,
            "seed": self.seed,
            "width": self.width,
            "height": self.height,
            "panorama": self.panorama,
            "init_strength": self.init_strength,
        }
        if include_image:
            out["init_image"] = self.init_image
        else:
            out["init_image_sha256"] = (
                hashlib.sha256(self.init_image.encode("ascii")).hexdigest() if self.init_image else None
            )
        return out


@dataclass(frozen=True)
class ImageResult:
    payload_b64: str
    format: str
    width: int
    height: int
    seed_used: int
    backend_id: str

    def decode(self) -> bytes:
        return base64.b64decode(self.payload_b64, validate=True)


def sniff_format(data: bytes) -> str | None:
    if data.startswith(b"\x89PNG\r\n\x1a\n"):
        return "png"
    if data.startswith(b"\xff\xd8\xff"):
        return "jpeg"
    return None


def check_result(result: ImageResult) -> ImageResult:
    """Confirm the payload decodes to an image of the declared size and format."""
    try:
        data = result.decode()
    except (binascii.Error, ValueError) as exc:
        raise ImageValidationError(f"payload is not valid base64: {exc}") from None
    fmt = sniff_format(data)
    if fmt is None or fmt != result.format:
        raise ImageValidationError(f"payload format {fmt!r} does not match declared {result.format!r}")
    try:
        with Image.open(io.BytesIO(data)) as img:
            img.load()
            size = img.size
    except Exception as exc:  # PIL raises a zoo of types on corrupt data
        raise ImageValidationError(f"payload does not decode as an image: {exc}") from None
    if size != (result.width, result.height):
        raise ImageValidationError(
            f"payload is {size[0]}x{size[1]}, declared {result.width}x{result.height}"
        )
    return result


def stub_digest(request: GenerationRequest) -> bytes:
    """SHA-256 over prompt, seed, width and height, NUL-separated."""
    material = f"{request.prompt_text}\x00{request.seed}\x00{request.width}\x00{request.height}"
    return hashlib.sha256(material.encode("utf-8")).digest()


def stub_generate(request: GenerationRequest, backend_id: str = "stub") -> ImageResult:
    """Deterministic PNG whose colour grid is expanded from the request digest."""
    digest = stub_digest(request)
    gw, gh = _STUB_GRID
    pixels = hashlib.shake_256(digest).digest(gw * gh * 3)
    tile = Image.frombytes("RGB", (gw, gh), pixels)
    img = tile.resize((request.width, request.height), Image.Resampling.NEAREST)
    buf = io.BytesIO()
    img.save(buf, format="PNG", optimize=False)
    return ImageResult(
        payload_b64=base64.b64encode(buf.getvalue()).decode("ascii"),
        format="png",
        width=request.width,
        height=request.height,
        seed_used=request.seed,
        backend_id=backend_id,
    )


def anchor_chain(
    base: ImageResult, request: GenerationRequest, strength: float = DEFAULT_INIT_STRENGTH
) -> GenerationRequest:
    """Copy of ``request`` anchored on ``base`` for image-to-image generation."""
    return dataclasses.replace(request, init_image=base.payload_b64, init_strength=strength)


@dataclass(frozen=True)
class ImageBackendConfig:
    backend_id: str = "stub"
    kind: str = "stub"  # stub | remote
    endpoint_url: str = "http://127.0.0.1:7860/generate"
    timeout_ms: int = 300_000
    max_retries: int = 1
    api_key_env: str | None = None
    max_in_flight: int = 2
    max_response_bytes: int = 64 * 1024 * 1024

    def __post_init__(self) -> None:
        if self.kind not in ("stub", "remote"):
            raise ConfigurationError(f"unknown image backend kind {self.kind!r}")
        if self.max_in_flight < 1 or self.timeout_ms < 1 or self.max_response_bytes < 1:
            raise ConfigurationError("image backend limits must be positive")
        if self.max_retries < 0:
            raise ConfigurationError("max_retries must be nonnegative")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> ImageBackendConfig:
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown image backend fields: {sorted(unknown)}")
        return cls(**dict(data))


class ImageBackend(Protocol):
    config: ImageBackendConfig

    @property
    def backend_id(self) -> str: ...

    def generate(self, request: GenerationRequest) -> ImageResult: ...


class StubImageBackend:
    def __init__(self, config: ImageBackendConfig | None = None) -> None:
        self.config = config or ImageBackendConfig()

    @property
    def backend_id(self) -> str:
        return self.config.backend_id

    def generate(self, request: GenerationRequest) -> ImageResult:
        return stub_generate(request, self.backend_id)


class RemoteImageBackend:
    """POST {prompt, seed, width, height[, init_image, strength]} -> {image, seed}."""

    def __init__(
        self,
        config: ImageBackendConfig,
        *,
        transport: httpx.BaseTransport | None = None,
        sleep=None,
    ) -> None:
        self.config = config
        self._transport = transport
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self._extra = {"sleep": sleep} if sleep is not None else {}

    @property
    def backend_id(self) -> str:
        return self.config.backend_id

    @staticmethod
    def payload(request: GenerationRequest) -> dict:
        body = {
            "prompt": request.prompt_text,
            "seed": request.seed,
            "width": request.width,
            "height": request.height,
        }
        if request.init_image is not None:
            body["init_image"] = request.init_image
            body["strength"] = request.init_strength
        return body

    def generate(self, request: GenerationRequest) -> ImageResult:
        request.validate()
        headers = {}
        secret = None
        if self.config.api_key_env:
            secret = os.environ.get(self.config.api_key_env)
            if not secret:
                raise ConfigurationError(
                    f"image backend {self.backend_id!r}: environment variable "
                    f"{self.config.api_key_env} is not set"
                )
            headers["Authorization"] = f"Bearer {secret}"
        with self._slots:
            response = _http.post_json(
                self.config.endpoint_url,
                self.payload(request),
                headers=headers,
                timeout_s=self.config.timeout_ms / 1000.0,
                max_retries=self.config.max_retries,
                transport=self._transport,
                secret=secret,
                max_response_bytes=self.config.max_response_bytes,
                **self._extra,
            )
        try:
            body = response.json()
            payload = body["image"]
            if payload.startswith("data:"):  # tolerate data URLs
                payload = payload.split(",", 1)[1]
            seed = int(body.get("seed", request.seed))
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise BackendError(
                f"unexpected image payload from {self.backend_id}",
                status=response.status_code,
                body_excerpt=_http.redact(response.text[:200], secret),
            ) from exc
        if seed != request.seed:
            raise BackendError(f"{self.backend_id} used seed {seed}, requested {request.seed}")
        try:
            data = base64.b64decode(payload, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise BackendError(f"{self.backend_id} returned malformed base64") from exc
        fmt = sniff_format(data)
        if fmt is None:
            raise BackendError(f"{self.backend_id} returned neither PNG nor JPEG data")
        result = ImageResult(payload, fmt, request.width, request.height, seed, self.backend_id)
        return check_result(result)


def generate(
    config: ImageBackendConfig,
    request: GenerationRequest,
    *,
    transport: httpx.BaseTransport | None = None,
) -> ImageResult:
    return make_image_backend(config, transport=transport).generate(request)


def make_image_backend(
    config: ImageBackendConfig, *, transport: httpx.BaseTransport | None = None
) -> StubImageBackend | RemoteImageBackend:
    if config.kind == "stub":
        return StubImageBackend(config)
    return RemoteImageBackend(config, transport=transport)
