"""Parse and check the fenced JSON block each chain step must return."""

from __future__ import annotations

import json
import re
from typing import Any

from ..affect import BANDS, FAMILIES
from ..errors import OutputViolation, PromptValidationError
from ..prompt import assemble
from .types import (
    DIMENSIONS,
    AdaptedScene,
    MetaphorPlan,
    MetaphorType,
    SceneContext,
    StateClaim,
    VisualCue,
)

_FENCE_RE = re.compile(r"```[ \t]*(?:json|JSON)?[ \t]*\r?\n(.*?)```", re.DOTALL)


def extract_block(raw: str) -> dict:
    """Return the last fenced block that decodes to a JSON object."""
    candidates = _FENCE_RE.findall(raw or "")
    if not candidates:
        raise OutputViolation(0, ["missing structured block: no fenced ```json block found"])
    errors = []
    for body in reversed(candidates):
        try:
            value = json.loads(body)
        except json.JSONDecodeError as exc:
            errors.append(f"structured block is not valid JSON ({exc.msg} at line {exc.lineno})")
            continue
        if isinstance(value, dict):
            return value
        errors.append("structured block is not a JSON object")
    raise OutputViolation(0, [errors[0]])


def _text(block: dict, name: str, problems: list[str], required: bool = True) -> str:
    if name not in block or block[name] is None:
        if required:
            problems.append(f"missing required field {name!r}")
        return ""
    value = block[name]
    if not isinstance(value, str):
        problems.append(f"field {name!r} must be a string")
        return ""
    if required and not value.strip():
        problems.append(f"empty required field {name!r}")
    return value


def _list(block: dict, name: str, problems: list[str], *, allow_empty: bool = False) -> list:
    if name not in block or block[name] is None:
        problems.append(f"missing required field {name!r}")
        return []
    value = block[name]
    if not isinstance(value, list):
        problems.append(f"field {name!r} must be a list")
        return []
    if not value and not allow_empty:
        problems.append(f"empty required field {name!r}")
    return value


def _step1(block: dict) -> StateClaim:
    problems: list[str] = []
    if isinstance(block.get("emotional_range"), list):  # a list of state words is fine
        rng = ", ".join(str(x) for x in block["emotional_range"])
        if not rng.strip():
            problems.append("empty required field 'emotional_range'")
    else:
        rng = _text(block, "emotional_range", problems)
    intensity = _text(block, "emotional_intensity", problems).strip().lower()
    if intensity and intensity not in BANDS:
        problems.append(f"invalid emotional_intensity {intensity!r}; expected one of {list(BANDS)}")
    family = _text(block, "family", problems).strip().lower()
    if family and family not in FAMILIES:
        problems.append(f"invalid family {family!r}; expected one of {list(FAMILIES)}")
    if problems:
        raise OutputViolation(1, problems)
    return StateClaim(rng, intensity, family)


def _step2(block: dict) -> MetaphorPlan:
    problems: list[str] = []
    types = []
    for i, entry in enumerate(_list(block, "metaphor_types", problems)):
        if not isinstance(entry, dict):
            problems.append(f"metaphor_types[{i}] must be an object")
            continue
        name = entry.get("type")
        try:
            mtype = MetaphorType.parse(name)
        except ValueError:
            problems.append(f"unknown metaphor type {name!r} in metaphor_types[{i}]")
            mtype = None
        rationale = entry.get("rationale")
        if not isinstance(rationale, str) or not rationale.strip():
            problems.append(f"empty required field 'rationale' in metaphor_types[{i}]")
        elif mtype is not None:
            types.append((mtype, rationale))

    cues = []
    raw_cues = _list(block, "visual_cues", problems)
    for i, entry in enumerate(raw_cues):
        if not isinstance(entry, dict):
            problems.append(f"visual_cues[{i}] must be an object")
            continue
        desc = entry.get("description")
        dim = entry.get("mapped_dimension")
        dyn = entry.get("dynamics")
        if not isinstance(desc, str) or not desc.strip():
            problems.append(f"empty required field 'description' in visual_cues[{i}]")
            continue
        if dim not in DIMENSIONS:
            problems.append(f"invalid mapped_dimension {dim!r} in visual_cues[{i}]")
            continue
        if dyn is not None and not isinstance(dyn, str):
            problems.append(f"dynamics in visual_cues[{i}] must be a string or null")
            continue
        cues.append(VisualCue(desc, dim, dyn or None))

    mapping = []
    for i, entry in enumerate(_list(block, "mapping", problems)):
        if not isinstance(entry, dict):
            problems.append(f"mapping[{i}] must be an object")
            continue
        aspect = entry.get("state_aspect")
        idx = entry.get("cue")
        if not isinstance(aspect, str) or not aspect.strip():
            problems.append(f"empty required field 'state_aspect' in mapping[{i}]")
        elif isinstance(idx, bool) or not isinstance(idx, int) or not 0 <= idx < len(raw_cues):
            problems.append(f"mapping[{i}] references nonexistent cue {idx!r}")
        else:
            mapping.append((aspect, idx))
    referenced = {i for _, i in mapping}
    for i in range(len(raw_cues)):
        if i not in referenced:
            problems.append(f"unmapped cue: visual_cues[{i}] has no mapping entry")
    if problems:
        raise OutputViolation(2, problems)
    return MetaphorPlan(tuple(types), tuple(cues), tuple(mapping))


def _step3(block: dict, scene: SceneContext | None) -> AdaptedScene:
    problems: list[str] = []
    overall = _text(block, "overall_description", problems)
    atmosphere = _text(block, "emotional_atmosphere", problems)
    details = _list(block, "details", problems)
    if any(not isinstance(d, str) or not d.strip() for d in details):
        problems.append("field 'details' must hold nonblank strings")
    statement = _text(block, "nonintrusion_statement", problems)
    if scene is not None and statement.strip() and scene.primary_activity not in statement:
        problems.append(
            f"nonintrusion_statement must name the main activity {scene.primary_activity!r}"
        )
    if problems:
        raise OutputViolation(3, problems)
    return AdaptedScene(overall, atmosphere, tuple(details), statement)


def _step4(block: dict):
    problems: list[str] = []
    _text(block, "main_scene", problems)
    _list(block, "metaphorical_elements", problems)
    if "detailed_modifiers" in block and not isinstance(block["detailed_modifiers"], (list, type(None))):
        problems.append("field 'detailed_modifiers' must be a list")
    if problems:
        raise OutputViolation(4, problems)
    try:
        return assemble(block)
    except PromptValidationError as exc:
        raise OutputViolation(4, [str(exc)]) from None


def validate_step_output(step_id: int, raw: str, scene: SceneContext | None = None) -> Any:
    """Typed structure for ``step_id`` or :class:`OutputViolation` listing each problem.

    Step 1 yields a :class:`StateClaim`, step 2 a :class:`MetaphorPlan`,
    step 3 an :class:`AdaptedScene`, step 4 a ``LayeredPrompt``. With
    ``scene`` given, step 3 also checks the non-intrusion statement.
    """
    if step_id not in (1, 2, 3, 4):
        raise ValueError(f"step_id must be 1..4, got {step_id!r}")
    try:
        block = extract_block(raw)
    except OutputViolation as exc:
        raise OutputViolation(step_id, exc.violations) from None
    if step_id == 1:
        return _step1(block)
    if step_id == 2:
        return _step2(block)
    if step_id == 3:
        return _step3(block, scene)
    return _step4(block)
