"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class BioMetaphorError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(BioMetaphorError):
    """Invalid configuration or an unresolvable credential."""


class TransportError(BioMetaphorError):
    """Network failure or timeout that persisted through all retries."""

    def __init__(self, message: str, attempts: int) -> None:
        super().__init__(message)
        self.attempts = attempts


class BackendError(BioMetaphorError):
    """A remote service answered with a non-success status."""

    def __init__(self, message: str, status: int | None = None, body_excerpt: str = "") -> None:
        super().__init__(message)
        self.status = status
        self.body_excerpt = body_excerpt


class FixtureMissError(BioMetaphorError, KeyError):
    """The scripted backend has no canned response for a request key."""

    def __init__(self, key: tuple[str, str, str]) -> None:
        super().__init__(f"no scripted response for key {'|'.join(key)!r}")
        self.key = key

    def __str__(self) -> str:  # KeyError would otherwise repr() the message
        return self.args[0]


class FixtureError(BioMetaphorError, ValueError):
    """A scripted fixture is malformed (e.g. duplicate keys)."""


class OutputViolation(BioMetaphorError, ValueError):
    """A reasoning step's response failed schema validation."""

    def __init__(self, step_id: int, violations: list[str]) -> None:
        super().__init__(f"step {step_id}: " + "; ".join(violations))
        self.step_id = step_id
        self.violations = list(violations)


class SequencingError(BioMetaphorError):
    """A step prompt was requested before the steps it depends on."""


class StepError(BioMetaphorError):
    """A chain step failed permanently; ``trace`` holds the partial run."""

    def __init__(self, message: str, step_id: int, trace=None) -> None:
        super().__init__(message)
        self.step_id = step_id
        self.trace = trace


class PromptValidationError(BioMetaphorError, ValueError):
    """A layered prompt is missing a mandatory layer."""


class PromptBudgetError(BioMetaphorError, ValueError):
    """The character budget cannot hold even the mandatory prompt prefix."""


class ImageValidationError(BioMetaphorError, ValueError):
    """A generation request or result violates its geometric contract."""


class SizeLimitError(BioMetaphorError):
    """A remote image response exceeded the configured size limit."""


class DecodeError(BioMetaphorError, ValueError):
    """Malformed base64 or undecodable image bytes."""

    def __init__(self, message: str, offset: int | None = None) -> None:
        super().__init__(message)
        self.offset = offset


class AspectError(ImageValidationError):
    """Panorama image is not 2:1."""

    def __init__(self, width: int, height: int) -> None:
        super().__init__(f"panorama must be 2:1, got {width}x{height}")
        self.width = width
        self.height = height


class PackageError(BioMetaphorError):
    """A scene package could not be written or failed validation."""
