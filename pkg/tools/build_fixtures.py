"""Regenerate the scripted chat fixtures under src/biometaphor/data/fixtures/.

Each fixture covers 4 steps x 8 octants x 3 built-in scenes. Cells default to
rule-table content wrapped in flavor-specific prose; the concert cells for
the excitement and depression/sadness octants are written out by hand.

    python tools/build_fixtures.py
"""

from __future__ import annotations

import json
from pathlib import Path

from biometaphor.affect import DEFAULT_OCTANT_TABLE, infer_state, point_at
from biometaphor.metaphor.rules import format_step_response, step_block
from biometaphor.metaphor.types import builtin_scenes

OUT_DIR = Path(__file__).resolve().parent.parent / "src" / "biometaphor" / "data" / "fixtures"

RANGES = {
    "pleasure": "pleasure, gladness, easy happiness",
    "excitement": "elation, enthusiasm, a highly positive and excited state",
    "arousal/alert": "alertness, astonishment, heightened attention",
    "distress": "distress, tension, alarm",
    "misery": "misery, frustration, displeasure",
    "depression/sadness": "sadness or melancholy, a quiet and heavy state",
    "sleepiness": "sleepiness, drowsiness, winding down",
    "contentment": "contentment, serenity, relaxation",
}

PROSE = {
    "gpt-4o": {
        1: "Step 1 - the valence and arousal values place this state in the {octant} region of the circumplex.",
        2: "Step 2 - metaphor types and visual cues suited to the {scene} scene.",
        3: "Step 3 - integrating the cues into the {scene} event.",
        4: "Step 4 - the three-layer prompt.",
    },
    "deepseek-chat": {
        1: "### Inner state\nThe pair falls into the {octant} sector of the valence-arousal plane.",
        2: "### Metaphor construction\nCues chosen for the {scene} setting.",
        3: "### Event adaptation\nHow the cues sit inside the {scene} event.",
        4: "### Prompt\nLayered text-to-image prompt.",
    },
}

CONCERT = "watching the live performance"

OVERRIDES = {
    ("gpt-4o", "excitement"): {
        1: {
            "emotional_range": "elation, enthusiasm, a highly positive and excited state",
            "emotional_intensity": "high",
            "family": "positive-activated",
        },
        2: {
            "metaphor_types": [
                {"type": "Ontological_EntitySubstance", "rationale": "Enthusiasm becomes shimmering, sparkling lights that fill the venue."},
                {"type": "Orientational", "rationale": "Upward-moving, rising elements carry the high energy and uplifting nature of elation."},
            ],
            "visual_cues": [
                {"description": "subtle star-like sparkles among the audience", "dynamics": "twinkling in bright pulses", "mapped_dimension": "valence"},
                {"description": "softly rising wisps of light", "dynamics": "rising gently upward like beams", "mapped_dimension": "arousal"},
            ],
            "mapping": [
                {"state_aspect": "elation and enthusiasm (high valence)", "cue": 0},
                {"state_aspect": "high arousal as upward motion", "cue": 1},
            ],
        },
        3: {
            "overall_description": "Concert stage alive with dynamic lighting, star-like sparkles among the audience and soft wisps of light rising above the crowd.",
            "emotional_atmosphere": "elated, high energy yet harmonious",
            "details": [
                "sparkles hover between the audience members",
                "wisps of light drift upward past the lighting rig",
                "vibrant purple, pink and blue beams",
            ],
            "nonintrusion_statement": f"The sparkles and rising wisps stay above and among the audience, enhancing the atmosphere without overwhelming the focus on {CONCERT}.",
        },
        4: {
            "main_scene": "Concert stage alive with dynamic lighting",
            "metaphorical_elements": ["subtle star-like sparkles among the audience", "softly rising wisps of light"],
            "detailed_modifiers": ["vibrant colors", "high energy yet harmonious atmosphere"],
        },
    },
    ("gpt-4o", "depression/sadness"): {
        1: {
            "emotional_range": "sadness or melancholy, low to medium intensity",
            "emotional_intensity": "low",
            "family": "negative-deactivated",
        },
        2: {
            "metaphor_types": [
                {"type": "Ontological_EntitySubstance", "rationale": "Sadness maps to a faint, lingering blue mist, fleeting and ethereal."},
                {"type": "Orientational", "rationale": "Keeping the mist slightly below eye level suggests a downward, introspective gaze."},
            ],
            "visual_cues": [
                {"description": "a faint, lingering blue mist", "dynamics": "lingering and slowly dissipating", "mapped_dimension": "valence"},
                {"description": "mist positioned slightly below eye level", "dynamics": "settling downward", "mapped_dimension": "arousal"},
            ],
            "mapping": [
                {"state_aspect": "sadness (low valence)", "cue": 0},
                {"state_aspect": "low arousal as a downward gaze", "cue": 1},
            ],
        },
        3: {
            "overall_description": "A concert stage with a subtle blue mist gathering at its base, swaying gently to the music.",
            "emotional_atmosphere": "melancholic and introspective amid the vibrant performance",
            "details": [
                "mist held below eye level around the stage base",
                "soft, muted lighting with a hazy blue tone",
            ],
            "nonintrusion_statement": f"The mist stays low around the stage base so it never hides the performers or disrupts {CONCERT}.",
        },
        4: {
            "main_scene": "A concert stage with a subtle blue mist gathering at its base",
            "metaphorical_elements": [
                "a faint, lingering blue mist gently swaying to the rhythm of the music",
                "the mist positioned below eye level, drifting downward",
            ],
            "detailed_modifiers": ["soft shifting light", "interplay of contrasting emotional atmospheres", "cool blue tones"],
        },
    },
    ("deepseek-chat", "excitement"): {
        1: {
            "emotional_range": "joy, elation, intense positive excitement",
            "emotional_intensity": "high",
            "family": "positive-activated",
        },
        2: {
            "metaphor_types": [
                {"type": "Ontological_EntitySubstance", "rationale": "Joy as radiant light and energy as sparkling particles and floating prismatic orbs."},
                {"type": "Ontological_Container", "rationale": "Overflowing luminescence shows happiness spilling beyond its boundaries."},
                {"type": "Orientational", "rationale": "Upward-spiraling movement mirrors heightened arousal."},
            ],
            "visual_cues": [
                {"description": "radiant light and sparkling particles", "dynamics": "pulsing with the beat", "mapped_dimension": "valence"},
                {"description": "floating prismatic orbs", "dynamics": "bobbing slowly above the crowd", "mapped_dimension": "both"},
                {"description": "luminescence overflowing the stage edges", "dynamics": "spilling outward", "mapped_dimension": "both"},
                {"description": "upward-spiraling glitter from the stage vents", "dynamics": "spiraling upward", "mapped_dimension": "arousal"},
            ],
            "mapping": [
                {"state_aspect": "joy", "cue": 0},
                {"state_aspect": "energy", "cue": 1},
                {"state_aspect": "intensity of happiness", "cue": 2},
                {"state_aspect": "heightened arousal", "cue": 3},
            ],
        },
        3: {
            "overall_description": "A concert stage at night bathed in golden spotlights, prismatic orbs floating over the crowd and glitter spiraling up from the stage vents.",
            "emotional_atmosphere": "joyful, intense and celebratory",
            "details": [
                "golden accents along the arched backdrop",
                "luminescence spilling just past the stage edges",
                "glitter spirals fading high above the lighting rig",
            ],
            "nonintrusion_statement": f"All effects stay above the crowd and at the stage margins, leaving the performers clear for {CONCERT}.",
        },
        4: {
            "main_scene": "Concert stage alive with dynamic lighting",
            "metaphorical_elements": [
                "sparkling particles and floating prismatic orbs above the crowd",
                "luminescence overflowing the stage edges",
                "upward-spiraling glitter rising from the stage vents",
            ],
            "detailed_modifiers": ["golden and prismatic accents", "intense yet joyful energy"],
        },
    },
    ("deepseek-chat", "depression/sadness"): {
        1: {
            "emotional_range": "melancholy with subdued energy, a quiet and introspective state",
            "emotional_intensity": "low",
            "family": "negative-deactivated",
        },
        2: {
            "metaphor_types": [
                {"type": "Ontological_Container", "rationale": "Melancholy as a contained presence that does not disrupt but subtly permeates."},
                {"type": "Orientational", "rationale": "Melancholy as downward and dissipating: sinking, fading."},
                {"type": "Ontological_EntitySubstance", "rationale": "Melancholy as a slow, diffuse substance like mist or ash, weightless but pervasive."},
            ],
            "visual_cues": [
                {"description": "a low haze held within the stage arch", "dynamics": "lingering in place", "mapped_dimension": "both"},
                {"description": "glowing embers drifting downward from the lighting rig", "dynamics": "sinking and fading", "mapped_dimension": "arousal"},
                {"description": "a translucent mist creeping across the floor like liquid shadow", "dynamics": "creeping slowly", "mapped_dimension": "valence"},
            ],
            "mapping": [
                {"state_aspect": "contained melancholy", "cue": 0},
                {"state_aspect": "subdued energy", "cue": 1},
                {"state_aspect": "low valence", "cue": 2},
            ],
        },
        3: {
            "overall_description": "A concert stage at night bathed in cool blue spotlights, translucent mist creeping across the floor and embers drifting down from the rig.",
            "emotional_atmosphere": "quiet, melancholic and introspective",
            "details": [
                "embers dissolve into the mist with delicate golden trails",
                "unused instruments stand silently at the stage edge",
            ],
            "nonintrusion_statement": f"The mist stays at floor level and the embers fade before reaching the crowd, so nothing obstructs {CONCERT}.",
        },
        4: {
            "main_scene": "A concert stage at night, bathed in cool blue spotlights",
            "metaphorical_elements": [
                "a translucent mist creeping across the floor like liquid shadow",
                "glowing embers drifting downward from the lighting rig, dissolving into the mist",
            ],
            "detailed_modifiers": ["delicate golden trails", "cool blue tones", "quiet introspective mood"],
        },
    },
}


def build(flavor: str) -> dict[str, str]:
    scenes = builtin_scenes()
    out: dict[str, str] = {}
    for angle, octant in DEFAULT_OCTANT_TABLE.entries:
        state = infer_state(point_at(angle))
        for scene_id, scene in scenes.items():
            for step in (1, 2, 3, 4):
                override = OVERRIDES.get((flavor, octant)) if scene_id == "concert" else None
                if override:
                    block = override[step]
                else:
                    block = step_block(step, state.family, state.intensity_label, scene)
                    if step == 1:
                        block = {**block, "emotional_range": RANGES[octant]}
                prose = PROSE[flavor][step].format(octant=octant, scene=scene_id)
                out[f"step{step}|{octant}|{scene_id}"] = format_step_response(prose, block)
    return out


if __name__ == "__main__":
    for flavor in PROSE:
        path = OUT_DIR / f"{flavor}.json"
        path.write_text(json.dumps(build(flavor), indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
        print(f"wrote {path}")
