"""Three-layer text-to-image prompts and their budgeted flattening."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Final, Mapping

from .errors import PromptBudgetError, PromptValidationError

SEPARATOR: Final[str] = "; "
DEFAULT_MAX_CHARS: Final[int] = 1000
LAYER_FIELDS: Final[tuple[str, ...]] = ("main_scene", "metaphorical_elements", "detailed_modifiers")


def normalize_ws(text: str) -> str:
    return " ".join(text.split())


@dataclass(frozen=True)
class LayeredPrompt:
    main_scene: str
    metaphorical_elements: tuple[str, ...]
    detailed_modifiers: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "metaphorical_elements", tuple(self.metaphorical_elements))
        object.__setattr__(self, "detailed_modifiers", tuple(self.detailed_modifiers))
        if not self.main_scene.strip():
            raise PromptValidationError("main_scene is empty")
        if not self.metaphorical_elements:
            raise PromptValidationError("metaphorical_elements is empty")
        for name in ("metaphorical_elements", "detailed_modifiers"):
            if any(not s.strip() for s in getattr(self, name)):
                raise PromptValidationError(f"{name} contains a blank entry")

    @property
    def segments(self) -> tuple[str, ...]:
        return (self.main_scene, *self.metaphorical_elements, *self.detailed_modifiers)

    def to_dict(self) -> dict:
        return {
            "main_scene": self.main_scene,
            "metaphorical_elements": list(self.metaphorical_elements),
            "detailed_modifiers": list(self.detailed_modifiers),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> LayeredPrompt:
        return assemble(data)


def _as_list(value, name: str) -> list[str]:
    if value is None:
        return []
    if isinstance(value, str):
        return [value]
    if not isinstance(value, (list, tuple)) or not all(isinstance(v, str) for v in value):
        raise PromptValidationError(f"{name} must be a list of strings")
    return list(value)


def assemble(sections: Mapping) -> LayeredPrompt:
    """Build a validated prompt from the parsed Step-4 sections.

    Whitespace is collapsed and entries that are blank after trimming are
    discarded before the mandatory-layer check.
    """
    main = sections.get("main_scene")
    if not isinstance(main, str):
        raise PromptValidationError("main_scene must be a string")
    elements = [normalize_ws(s) for s in _as_list(sections.get("metaphorical_elements"), "metaphorical_elements")]
    modifiers = [normalize_ws(s) for s in _as_list(sections.get("detailed_modifiers"), "detailed_modifiers")]
    return LayeredPrompt(
        main_scene=normalize_ws(main),
        metaphorical_elements=tuple(s for s in elements if s),
        detailed_modifiers=tuple(s for s in modifiers if s),
    )


def flatten(prompt: LayeredPrompt, max_chars: int = DEFAULT_MAX_CHARS) -> str:
    """Join layers with ``"; "``, dropping whole trailing segments to fit.

    Modifiers go first (from the end), then metaphorical elements beyond the
    first. The kept segments are always a prefix of ``prompt.segments``.
    """
    if max_chars < 1:
        raise PromptBudgetError(f"max_chars must be positive, got {max_chars}")
    segments = prompt.segments
    mandatory = 2
    lengths = [len(s) for s in segments]
    total = sum(lengths) + len(SEPARATOR) * (len(segments) - 1)
    keep = len(segments)
    while total > max_chars and keep > mandatory:
        keep -= 1
        total -= lengths[keep] + len(SEPARATOR)
    if total > max_chars:
        raise PromptBudgetError(
            f"budget {max_chars} cannot hold main scene plus first element ({total} chars)"
        )
    return SEPARATOR.join(segments[:keep])
