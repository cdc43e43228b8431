from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Mapping

from ..affect import BANDS, FAMILIES, InferredState, VAPair
from ..prompt import LayeredPrompt

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
DIMENSIONS = ("valence", "arousal", "both")
_SCENE_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")


class MetaphorType(str, Enum):
    ORIENTATIONAL = "Orientational"
    ENTITY_SUBSTANCE = "Ontological_EntitySubstance"
    CONTAINER = "Ontological_Container"
    PERSONIFICATION = "Ontological_Personification"
    METONYMY = "Ontological_Metonymy"
    STRUCTURAL = "Structural"

    @classmethod
    def parse(cls, name: str) -> MetaphorType:
        """Exact canonical name, case-insensitive. Anything else is rejected."""
        if isinstance(name, str):
            folded = name.strip().casefold()
            for member in cls:
                if member.value.casefold() == folded:
                    return member
        raise ValueError(f"unknown metaphor type {name!r}")


@lru_cache(maxsize=None)
def load_taxonomy() -> dict[str, dict[str, str]]:
    data = json.loads((DATA_DIR / "taxonomy.json").read_text(encoding="utf-8"))
    if set(data) != {m.value for m in MetaphorType}:
        raise RuntimeError("taxonomy.json does not cover exactly the six metaphor types")
    return data


@dataclass(frozen=True)
class VisualCue:
    description: str
    mapped_dimension: str
    dynamics: str | None = None

    def __post_init__(self) -> None:
        if not self.description.strip():
            raise ValueError("cue description is empty")
        if self.mapped_dimension not in DIMENSIONS:
            raise ValueError(f"mapped_dimension must be one of {DIMENSIONS}")

    def to_dict(self) -> dict:
        return {
            "description": self.description,
            "dynamics": self.dynamics,
            "mapped_dimension": self.mapped_dimension,
        }


@dataclass(frozen=True)
class MetaphorPlan:
    types: tuple[tuple[MetaphorType, str], ...]
    cues: tuple[VisualCue, ...]
    mapping: tuple[tuple[str, int], ...]

    def __post_init__(self) -> None:
        for name in ("types", "cues", "mapping"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.types:
            raise ValueError("a plan needs at least one metaphor type")
        if not self.cues:
            raise ValueError("a plan needs at least one visual cue")
        for mtype, rationale in self.types:
            if not isinstance(mtype, MetaphorType):
                raise ValueError(f"not a metaphor type: {mtype!r}")
            if not rationale.strip():
                raise ValueError(f"empty rationale for {mtype.value}")
        for aspect, idx in self.mapping:
            if not 0 <= idx < len(self.cues):
                raise ValueError(f"mapping references missing cue {idx}")
        unmapped = set(range(len(self.cues))) - {i for _, i in self.mapping}
        if unmapped:
            raise ValueError(f"cues {sorted(unmapped)} have no mapping entry")

    @property
    def type_names(self) -> list[str]:
        return [t.value for t, _ in self.types]

    def to_dict(self) -> dict:
        return {
            "metaphor_types": [{"type": t.value, "rationale": r} for t, r in self.types],
            "visual_cues": [c.to_dict() for c in self.cues],
            "mapping": [{"state_aspect": a, "cue": i} for a, i in self.mapping],
        }


@dataclass(frozen=True)
class SceneContext:
    scene_id: str
    description: str
    primary_activity: str
    style_notes: str | None = None

    def __post_init__(self) -> None:
        if not self.scene_id or not _SCENE_ID_RE.match(self.scene_id):
            raise ValueError(
                f"scene_id {self.scene_id!r} must be a slug (letters, digits, '_', '-', '.')"
            )
        if not self.primary_activity.strip():
            raise ValueError("primary_activity must be nonempty")

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "description": self.description,
            "primary_activity": self.primary_activity,
            "style_notes": self.style_notes,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> SceneContext:
        return cls(
            scene_id=data["scene_id"],
            description=data.get("description", ""),
            primary_activity=data["primary_activity"],
            style_notes=data.get("style_notes"),
        )


@lru_cache(maxsize=None)
def _builtin_scene_table() -> dict[str, dict]:
    return json.loads((DATA_DIR / "scenes.json").read_text(encoding="utf-8"))


def builtin_scenes() -> dict[str, SceneContext]:
    """The gallery, sports and concert scenes shipped with the package."""
    return {
        sid: SceneContext(scene_id=sid, **fields) for sid, fields in _builtin_scene_table().items()
    }


@dataclass(frozen=True)
class AdaptedScene:
    overall_description: str
    emotional_atmosphere: str
    details: tuple[str, ...]
    nonintrusion_statement: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "details", tuple(self.details))
        if not self.overall_description.strip():
            raise ValueError("overall_description is empty")
        if not self.emotional_atmosphere.strip():
            raise ValueError("emotional_atmosphere is empty")
        if not self.details or any(not d.strip() for d in self.details):
            raise ValueError("details must be a nonempty list of nonblank strings")
        if not self.nonintrusion_statement.strip():
            raise ValueError("nonintrusion_statement is empty")

    def to_dict(self) -> dict:
        return {
            "overall_description": self.overall_description,
            "emotional_atmosphere": self.emotional_atmosphere,
            "details": list(self.details),
            "nonintrusion_statement": self.nonintrusion_statement,
        }


@dataclass(frozen=True)
class StateClaim:
    """What the reasoning backend reported for step 1."""

    emotional_range: str
    emotional_intensity: str
    family: str

    def __post_init__(self) -> None:
        if not self.emotional_range.strip():
            raise ValueError("emotional_range is empty")
        if self.emotional_intensity not in BANDS:
            raise ValueError(f"emotional_intensity must be one of {BANDS}")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")

    def to_dict(self) -> dict:
        return {
            "emotional_range": self.emotional_range,
            "emotional_intensity": self.emotional_intensity,
            "family": self.family,
        }


@dataclass
class StepRecord:
    step_id: int
    request: dict
    raw_response: str | None = None
    parsed: dict | None = None
    status: str = "pending"  # ok | failed
    repairs: int = 0
    rejected_responses: list[str] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)
    started_at: str = ""
    finished_at: str = ""

    def content(self) -> dict:
        """Timestamp-free fields; these define the trace's identity."""
        return {
            "step_id": self.step_id,
            "request": self.request,
            "raw_response": self.raw_response,
            "parsed": self.parsed,
            "status": self.status,
            "repairs": self.repairs,
            "rejected_responses": self.rejected_responses,
            "violations": self.violations,
        }

    def to_dict(self) -> dict:
        return {**self.content(), "started_at": self.started_at, "finished_at": self.finished_at}


@dataclass
class CoTTrace:
    va: VAPair
    scene: SceneContext
    backend_id: str
    model_name: str
    temperature: float
    template_version: str
    chain_mode: str
    local_state: InferredState
    steps: list[StepRecord] = field(default_factory=list)
    status: str = "running"  # ok | failed
    failed_step: int | None = None
    trace_id: str = ""
    started_at: str = ""
    finished_at: str = ""
    claim: StateClaim | None = None
    plan: MetaphorPlan | None = None
    adapted: AdaptedScene | None = None
    prompt: LayeredPrompt | None = None

    def content(self) -> dict:
        return {
            "va": self.va.to_dict(),
            "scene": self.scene.to_dict(),
            "backend_id": self.backend_id,
            "model_name": self.model_name,
            "temperature": self.temperature,
            "template_version": self.template_version,
            "chain_mode": self.chain_mode,
            "local_state": self.local_state.to_dict(),
            "steps": [s.content() for s in self.steps],
            "status": self.status,
            "failed_step": self.failed_step,
        }

    def to_dict(self) -> dict:
        out = self.content()
        out["steps"] = [s.to_dict() for s in self.steps]
        out.update(
            trace_id=self.trace_id,
            started_at=self.started_at,
            finished_at=self.finished_at,
            final_prompt=self.prompt.to_dict() if self.prompt else None,
        )
        return out
