"""Rule-table planner: a deterministic offline stand-in for the reasoning steps."""

from __future__ import annotations

import json
from functools import lru_cache
from string import Template
from typing import Mapping

from ..affect import BANDS, FAMILIES, InferredState
from ..errors import ConfigurationError
from ..prompt import LayeredPrompt, assemble
from ..reasoning import BackendConfig, ChatRequest
from .types import (
    DATA_DIR,
    AdaptedScene,
    MetaphorPlan,
    MetaphorType,
    SceneContext,
    StateClaim,
    VisualCue,
    builtin_scenes,
)

ANY_SCENE = "*"


@lru_cache(maxsize=None)
def load_rule_table() -> dict[str, dict]:
    raw = json.loads((DATA_DIR / "rules.json").read_text(encoding="utf-8"))
    table = {k: v for k, v in raw.items() if not k.startswith("_")}
    scenes = [*builtin_scenes(), ANY_SCENE]
    missing = [
        f"{f}|{i}|{s}" for f in FAMILIES for i in BANDS for s in scenes if f"{f}|{i}|{s}" not in table
    ]
    if missing:
        raise RuntimeError(f"rules.json is missing keys: {missing[:5]}...")
    return table


def _fill(value, scene: SceneContext):
    if isinstance(value, str):
        return Template(value).safe_substitute(
            primary_activity=scene.primary_activity, scene_description=scene.description
        )
    if isinstance(value, list):
        return [_fill(v, scene) for v in value]
    if isinstance(value, dict):
        return {k: _fill(v, scene) for k, v in value.items()}
    return value


def rule_entry(family: str, intensity: str, scene: SceneContext) -> dict:
    """Rendered table entry; scenes without their own rows use the '*' rows."""
    table = load_rule_table()
    key = f"{family}|{intensity}|{scene.scene_id}"
    if key not in table:
        key = f"{family}|{intensity}|{ANY_SCENE}"
    return _fill(table[key], scene)


def _plan_from(entry: dict) -> MetaphorPlan:
    return MetaphorPlan(
        types=tuple((MetaphorType.parse(t["type"]), t["rationale"]) for t in entry["metaphor_types"]),
        cues=tuple(
            VisualCue(c["description"], c["mapped_dimension"], c.get("dynamics"))
            for c in entry["visual_cues"]
        ),
        mapping=tuple((m["state_aspect"], m["cue"]) for m in entry["mapping"]),
    )


def rule_based_plan(state: InferredState, scene: SceneContext) -> tuple[MetaphorPlan, AdaptedScene]:
    entry = rule_entry(state.family, state.intensity_label, scene)
    adapted = AdaptedScene(
        overall_description=entry["overall_description"],
        emotional_atmosphere=entry["emotional_atmosphere"],
        details=tuple(entry["details"]),
        nonintrusion_statement=entry["nonintrusion_statement"],
    )
    return _plan_from(entry), adapted


def rule_based_prompt(state: InferredState, scene: SceneContext) -> LayeredPrompt:
    return assemble(rule_entry(state.family, state.intensity_label, scene)["prompt"])


def rule_based_claim(state: InferredState) -> StateClaim:
    entry = rule_entry(state.family, state.intensity_label, _PLACEHOLDER_SCENE)
    return StateClaim(entry["emotional_range"], state.intensity_label, state.family)


_PLACEHOLDER_SCENE = SceneContext("any", "", "the main activity")


def format_step_response(prose: str, block: Mapping) -> str:
    """Prose followed by the single fenced JSON block the validators expect."""
    body = json.dumps(block, indent=2, ensure_ascii=False)
    return f"{prose.strip()}\n\n```json\n{body}\n```\n"


def step_block(step_id: int, family: str, intensity: str, scene: SceneContext) -> dict:
    entry = rule_entry(family, intensity, scene)
    if step_id == 1:
        return {"emotional_range": entry["emotional_range"], "emotional_intensity": intensity, "family": family}
    if step_id == 2:
        return {k: entry[k] for k in ("metaphor_types", "visual_cues", "mapping")}
    if step_id == 3:
        return {
            k: entry[k]
            for k in ("overall_description", "emotional_atmosphere", "details", "nonintrusion_statement")
        }
    return entry["prompt"]


_PROSE = {
    1: "Reading the pair on the circumplex.",
    2: "Choosing metaphors for the inferred state.",
    3: "Placing the cues into the event.",
    4: "Final three-layer prompt.",
}


class RuleBasedBackend:
    """Answers chain requests from the rule table, keyed by request tags."""

    def __init__(
        self,
        scenes: Mapping[str, SceneContext] | None = None,
        config: BackendConfig | None = None,
    ) -> None:
        self.scenes = dict(builtin_scenes() if scenes is None else scenes)
        self.config = config or BackendConfig(
            backend_id="rule-engine", kind="rule", model_name="rule-table", temperature=0.0
        )

    @property
    def backend_id(self) -> str:
        return self.config.backend_id

    def complete(self, request: ChatRequest) -> str:
        tags = request.tag_map
        try:
            step_id = int(tags["step"].removeprefix("step"))
            family, intensity, scene_id = tags["family"], tags["intensity"], tags["scene"]
        except (KeyError, ValueError) as exc:
            raise ConfigurationError(f"rule backend needs step/family/intensity/scene tags: {tags}") from exc
        if scene_id not in self.scenes:
            raise ConfigurationError(f"rule backend does not know scene {scene_id!r}")
        block = step_block(step_id, family, intensity, self.scenes[scene_id])
        return format_step_response(_PROSE[step_id], block)
