"""Biodata-to-metaphor pipeline for virtual co-present events.

Valence-arousal pairs are read on the circumplex, turned into metaphorical
visual cues by a four-step reasoning chain, rendered as 2:1 panoramas and
written out as engine-loadable scene packages.
"""

from __future__ import annotations

from .affect import (
    CircumplexGeometry,
    InferredState,
    OctantTable,
    VAPair,
    aggregate_group,
    infer_state,
    polar_of,
    prototypical_va_pairs,
)
from .imaging import GenerationRequest, ImageBackendConfig, ImageResult, anchor_chain, stub_generate
from .metaphor import CoTPolicy, CoTTrace, SceneContext, builtin_scenes, run_cot
from .packaging import ScenePackage, package, validate_package
from .pipeline import PipelineConfig, load_config, mock_config, run_batch
from .prompt import LayeredPrompt, assemble, flatten
from .reasoning import BackendConfig, ChatRequest, ScriptedFixture, make_scripted

__version__ = "0.1.0"

__all__ = [
    "BackendConfig",
    "ChatRequest",
    "CircumplexGeometry",
    "CoTPolicy",
    "CoTTrace",
    "GenerationRequest",
    "ImageBackendConfig",
    "ImageResult",
    "InferredState",
    "LayeredPrompt",
    "OctantTable",
    "PipelineConfig",
    "SceneContext",
    "ScenePackage",
    "ScriptedFixture",
    "VAPair",
    "aggregate_group",
    "anchor_chain",
    "assemble",
    "builtin_scenes",
    "flatten",
    "infer_state",
    "load_config",
    "make_scripted",
    "mock_config",
    "package",
    "polar_of",
    "prototypical_va_pairs",
    "run_batch",
    "run_cot",
    "stub_generate",
    "validate_package",
]
