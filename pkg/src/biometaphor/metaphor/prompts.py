"""Deterministic instantiation of the four step templates."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from string import Template
from typing import Any

from ..affect import DEFAULT_GEOMETRY, CircumplexGeometry, InferredState, VAPair
from ..errors import SequencingError
from ..reasoning import ChatRequest
from .types import DATA_DIR, SceneContext, load_taxonomy

CHAIN_MODES = ("conversational", "isolated")


@lru_cache(maxsize=None)
def load_templates() -> dict[str, str]:
    raw = json.loads((DATA_DIR / "templates.json").read_text(encoding="utf-8"))
    return {k: v if isinstance(v, str) else "\n".join(v) for k, v in raw.items()}


def template_version() -> str:
    return load_templates()["version"]


def fmt_value(x: float) -> str:
    """Three decimals at most, trailing zeros dropped: 0.14, 0.854, 1."""
    return f"{x:.3f}".rstrip("0").rstrip(".") or "0"


def taxonomy_text() -> str:
    return "\n".join(
        f"- {name} ({entry['label']}): {entry['definition']} Example: {entry['example']}"
        for name, entry in load_taxonomy().items()
    )


def anchor_text(state: InferredState) -> str:
    if state.family == "neutral":
        where = "at the neutral center of the circumplex"
    else:
        where = (
            f"at {state.angle_deg:.1f} degrees counterclockwise from the positive-valence axis, "
            f"nearest circumplex label '{state.octant_label}'"
        )
    return (
        f"the pair lies {where}; extremity {state.extremity:.2f} of the rim radius; "
        f"valence band {state.valence_band}; arousal band {state.arousal_band}; "
        f"quadrant family {state.family}."
    )


@dataclass
class CoTContext:
    va: VAPair
    scene: SceneContext
    local_state: InferredState
    temperature: float = 1.0
    max_tokens: int = 2048
    geometry: CircumplexGeometry = DEFAULT_GEOMETRY
    outputs: dict[int, Any] = field(default_factory=dict)
    responses: dict[int, str] = field(default_factory=dict)


def step_text(step_id: int, ctx: CoTContext) -> str:
    t = load_templates()
    scene = ctx.scene
    if step_id == 1:
        c = ctx.geometry.center
        return Template(t["step1"]).substitute(
            valence=fmt_value(ctx.va.valence),
            arousal=fmt_value(ctx.va.arousal),
            center_v=fmt_value(c.valence),
            center_a=fmt_value(c.arousal),
            radius=fmt_value(ctx.geometry.radius),
            anchor=anchor_text(ctx.local_state),
        )
    if step_id == 2:
        return Template(t["step2"]).substitute(
            taxonomy=taxonomy_text(), scene_id=scene.scene_id, scene_description=scene.description
        )
    if step_id == 3:
        return Template(t["step3"]).substitute(
            scene_id=scene.scene_id,
            scene_description=scene.description,
            primary_activity=scene.primary_activity,
            style_notes=scene.style_notes or "",
        )
    if step_id == 4:
        return t["step4"]
    raise ValueError(f"step_id must be 1..4, got {step_id!r}")


def _prior_json(step_id: int, ctx: CoTContext) -> str:
    prior = {f"step{i}": ctx.outputs[i].to_dict() for i in range(1, step_id)}
    return json.dumps(prior, indent=2, sort_keys=True, ensure_ascii=False)


def request_tags(step_id: int, ctx: CoTContext) -> dict[str, str]:
    return {
        "step": f"step{step_id}",
        "octant": ctx.local_state.octant_label,
        "scene": ctx.scene.scene_id,
        "family": ctx.local_state.family,
        "intensity": ctx.local_state.intensity_label,
    }


def build_step_prompt(
    step_id: int, ctx: CoTContext, chain_mode: str = "conversational"
) -> ChatRequest:
    """The request for ``step_id`` given everything accepted so far.

    Conversational mode replays earlier step prompts and accepted answers as
    chat history; isolated mode sends one user turn carrying the earlier
    parsed outputs as JSON.
    """
    if chain_mode not in CHAIN_MODES:
        raise ValueError(f"chain_mode must be one of {CHAIN_MODES}")
    if step_id not in (1, 2, 3, 4):
        raise ValueError(f"step_id must be 1..4, got {step_id!r}")
    missing = [i for i in range(1, step_id) if i not in ctx.outputs or i not in ctx.responses]
    if missing:
        raise SequencingError(f"step {step_id} needs accepted output of steps {missing}")
    t = load_templates()
    if chain_mode == "conversational":
        users = tuple(step_text(i, ctx) for i in range(1, step_id + 1))
        assistants = tuple(ctx.responses[i] for i in range(1, step_id))
    else:
        text = step_text(step_id, ctx)
        if step_id > 1:
            text = Template(t["prior"]).substitute(prior_json=_prior_json(step_id, ctx)) + "\n\n" + text
        users, assistants = (text,), ()
    return ChatRequest(
        system_text=t["system"],
        user_turns=users,
        assistant_turns=assistants,
        temperature=ctx.temperature,
        max_tokens=ctx.max_tokens,
        tags=tuple(request_tags(step_id, ctx).items()),
    )


def repair_request(base: ChatRequest, step_id: int, rejected: list[str], violations: list[list[str]]) -> ChatRequest:
    """Extend ``base`` with each rejected answer and a message quoting its violations."""
    t = Template(load_templates()["repair"])
    users = list(base.user_turns)
    assistants = list(base.assistant_turns)
    for bad, problems in zip(rejected, violations):
        assistants.append(bad)
        users.append(
            t.substitute(step_id=step_id, violations="\n".join(f"- {p}" for p in problems))
        )
    tags = {**base.tag_map, "attempt": str(len(rejected) + 1)}
    return ChatRequest(
        system_text=base.system_text,
        user_turns=tuple(users),
        assistant_turns=tuple(assistants),
        temperature=base.temperature,
        max_tokens=base.max_tokens,
        tags=tuple(tags.items()),
    )
