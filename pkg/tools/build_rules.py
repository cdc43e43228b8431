"""Regenerate src/biometaphor/data/rules.json from the component tables below.

The JSON file is the shipped artifact and may be hand-edited afterwards;
rerunning this script overwrites such edits.

    python tools/build_rules.py
"""

from __future__ import annotations

import json
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "src" / "biometaphor" / "data" / "rules.json"

FAMILIES = [
    "positive-activated",
    "positive-deactivated",
    "negative-activated",
    "negative-deactivated",
    "neutral",
]
INTENSITIES = ["low", "medium", "high"]

# family -> (short name, cue description, dynamics, tone, emotional range)
SUBSTANCE = {
    "positive-activated": (
        "sparkling lights",
        "drifting, sparkling lights",
        "twinkling in quick, bright pulses",
        "warm",
        "joy, excitement, elation",
    ),
    "positive-deactivated": (
        "glowing motes",
        "soft glowing motes of pale light",
        "drifting slowly and evenly",
        "cool",
        "contentment, calm, relaxation",
    ),
    "negative-activated": (
        "flickering embers",
        "restless, flickering embers",
        "crackling in uneven bursts",
        "warm",
        "tension, distress, agitation",
    ),
    "negative-deactivated": (
        "mist",
        "a pale blue mist hanging low",
        "spreading slowly and thinning out",
        "cool",
        "sadness, melancholy, fatigue",
    ),
    "neutral": (
        "ambient haze",
        "a faint, even ambient haze",
        None,
        "neutral",
        "a neutral, balanced state",
    ),
}

# (polarity, intensity) -> (short name, cue description, dynamics, direction word)
ORIENTATION = {
    ("positive", "high"): (
        "upward-rising light",
        "upward-rising wisps of light",
        "rising gently toward the sky",
        "upward",
    ),
    ("negative", "high"): (
        "outward-scattering sparks",
        "outward-scattering sparks",
        "pushing outward from the center toward the edges",
        "outward",
    ),
    ("positive", "low"): (
        "inward-drifting glow",
        "inward-drifting glow hovering at eye level",
        "drawing slowly inward and settling",
        "inward",
    ),
    ("negative", "low"): (
        "downward-sinking mist",
        "downward-sinking haze pooling below eye level",
        "sinking slowly downward and dissipating",
        "downward",
    ),
}

SCENE = {
    "gallery": (
        "A panoramic virtual art gallery with framed artworks on softly lit walls",
        "along the vaulted ceiling and open corridors, clear of the artworks",
    ),
    "sports": (
        "A panoramic virtual table tennis arena with a brightly lit match table",
        "above the spectator stands, clear of the playing area",
        ),
    "concert": (
        "A panoramic virtual concert stage with a lighting rig and a gathered crowd",
        "in the air above the audience, away from the performers",
    ),
    "*": (
        "A panoramic view of $scene_description",
        "around the edges of the space",
    ),
}

TONE = {
    "warm": "warm amber and rose tones",
    "cool": "cool blue and teal tones",
    "neutral": "soft neutral grey-white tones",
}
INTENSITY_MOD = {
    "high": "bright, buoyant yet balanced mood",
    "medium": "steady, balanced energy",
    "low": "subdued, quiet energy",
}
ATMOSPHERE = {
    ("warm", "high"): "lively and warm",
    ("warm", "medium"): "animated and warm",
    ("warm", "low"): "gently warm",
    ("cool", "high"): "charged yet cool",
    ("cool", "medium"): "calm and cool",
    ("cool", "low"): "hushed, cool and introspective",
    ("neutral", "high"): "even and alert",
    ("neutral", "medium"): "even and unremarkable",
    ("neutral", "low"): "even and still",
}


def entry(family: str, intensity: str, scene: str) -> dict:
    short, desc, dyn, tone, emo_range = SUBSTANCE[family]
    main, placement = SCENE[scene]
    polarity = family.split("-")[0]
    types = [
        {
            "type": "Ontological_EntitySubstance",
            "rationale": (
                f"Renders the {emo_range} state as a visible substance ({short}) "
                "that can sit at the periphery of the event."
            ),
        }
    ]
    cues = [
        {
            "description": desc,
            "dynamics": dyn,
            "mapped_dimension": "both" if family == "neutral" else "valence",
        }
    ]
    mapping = [
        {
            "state_aspect": "overall balance of the state"
            if family == "neutral"
            else f"valence: {polarity} feeling",
            "cue": 0,
        }
    ]
    elements = [f"{desc} {placement}"]
    shorts = [short]
    if family != "neutral" and intensity != "medium":
        o_short, o_desc, o_dyn, direction = ORIENTATION[(polarity, intensity)]
        types.append(
            {
                "type": "Orientational",
                "rationale": (
                    f"{direction.capitalize()} movement carries the {intensity} arousal "
                    "through spatial direction."
                ),
            }
        )
        cues.append({"description": o_desc, "dynamics": o_dyn, "mapped_dimension": "arousal"})
        mapping.append({"state_aspect": f"arousal: {intensity} activation", "cue": 1})
        elements.append(f"{o_desc}, {o_dyn}")
        shorts.append(o_short)
    tone_text = TONE[tone]
    details = [f"{c['description']}" + (f", {c['dynamics']}" if c["dynamics"] else "") for c in cues]
    details.append(f"{tone_text} color palette")
    return {
        "emotional_range": emo_range,
        "metaphor_types": types,
        "visual_cues": cues,
        "mapping": mapping,
        "overall_description": f"{main}, with {desc} {placement}.",
        "emotional_atmosphere": ATMOSPHERE[(tone, intensity)],
        "details": details,
        "nonintrusion_statement": (
            f"The {' and '.join(shorts)} stay {placement} and never block or distract from "
            "$primary_activity."
        ),
        "prompt": {
            "main_scene": main,
            "metaphorical_elements": elements,
            "detailed_modifiers": [
                tone_text,
                INTENSITY_MOD[intensity],
                "layered soft light",
                "equirectangular 360-degree panorama",
            ],
        },
    }


def build() -> dict:
    table = {"_comment": "key: family|intensity|scene ('*' = any custom scene). $primary_activity and $scene_description are filled per scene."}
    for family in FAMILIES:
        for intensity in INTENSITIES:
            for scene in SCENE:
                table[f"{family}|{intensity}|{scene}"] = entry(family, intensity, scene)
    return table


if __name__ == "__main__":
    OUT.write_text(json.dumps(build(), indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
    print(f"wrote {OUT}")
