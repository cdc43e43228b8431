"""Metaphor construction: the four-step reasoning chain and its rule-table fallback."""

from .engine import CoTPolicy, content_hash, replay_trace, run_cot
from .prompts import CoTContext, build_step_prompt, template_version
from .rules import RuleBasedBackend, rule_based_claim, rule_based_plan, rule_based_prompt
from .types import (
    AdaptedScene,
    CoTTrace,
    MetaphorPlan,
    MetaphorType,
    SceneContext,
    StateClaim,
    StepRecord,
    VisualCue,
    builtin_scenes,
    load_taxonomy,
)
from .validation import validate_step_output

__all__ = [
    "AdaptedScene",
    "CoTContext",
    "CoTPolicy",
    "CoTTrace",
    "MetaphorPlan",
    "MetaphorType",
    "RuleBasedBackend",
    "SceneContext",
    "StateClaim",
    "StepRecord",
    "VisualCue",
    "build_step_prompt",
    "builtin_scenes",
    "content_hash",
    "load_taxonomy",
    "replay_trace",
    "rule_based_claim",
    "rule_based_plan",
    "rule_based_prompt",
    "run_cot",
    "template_version",
    "validate_step_output",
]
