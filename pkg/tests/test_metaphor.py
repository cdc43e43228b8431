from __future__ import annotations

import itertools
import json

import pytest

from biometaphor.affect import BANDS, FAMILIES, InferredState, VAPair, infer_state, prototypical_va_pairs
from biometaphor.errors import FixtureMissError, OutputViolation, SequencingError, StepError
from biometaphor.metaphor import (
    CoTContext,
    CoTPolicy,
    MetaphorType,
    RuleBasedBackend,
    SceneContext,
    build_step_prompt,
    builtin_scenes,
    load_taxonomy,
    replay_trace,
    rule_based_plan,
    rule_based_prompt,
    run_cot,
    validate_step_output,
)
from biometaphor.metaphor.rules import format_step_response
from biometaphor.reasoning import ScriptedFixture, load_fixture, make_scripted

from conftest import CountingBackend

SCENES = builtin_scenes()
CONCERT = SCENES["concert"]
GALLERY = SCENES["gallery"]
EXCITED = VAPair(0.854, 0.854)
SAD = VAPair(0.146, 0.146)


def fenced(block: dict, prose: str = "Reasoning.") -> str:
    return format_step_response(prose, block)


def ctx_for(va: VAPair, scene: SceneContext) -> CoTContext:
    return CoTContext(va, scene, infer_state(va))


def gpt():
    return make_scripted(load_fixture("builtin:gpt-4o"))


PLAN = {
    "metaphor_types": [
        {"type": "Orientational", "rationale": "rising energy"},
        {"type": "Ontological_EntitySubstance", "rationale": "joy as light"},
    ],
    "visual_cues": [
        {"description": "rising sparks", "dynamics": "upward", "mapped_dimension": "arousal"},
        {"description": "warm glow", "dynamics": None, "mapped_dimension": "valence"},
        {"description": "pulsing haze", "dynamics": "pulsing", "mapped_dimension": "both"},
    ],
    "mapping": [
        {"state_aspect": "energy", "cue": 0},
        {"state_aspect": "pleasure", "cue": 1},
        {"state_aspect": "overall", "cue": 2},
    ],
}

ADAPTED = {
    "overall_description": "A concert with glowing air.",
    "emotional_atmosphere": "buoyant",
    "details": ["sparks above the crowd"],
    "nonintrusion_statement": "Effects stay overhead and never block watching the live performance.",
}


class TestTaxonomy:
    def test_closed_set_of_six(self):
        assert len(MetaphorType) == 6
        assert set(load_taxonomy()) == {m.value for m in MetaphorType}

    @pytest.mark.parametrize("name", ["Synesthetic", "Ontological", "Entity", "", None])
    def test_unknown_rejected(self, name):
        with pytest.raises(ValueError):
            MetaphorType.parse(name)

    def test_case_insensitive(self):
        assert MetaphorType.parse("orientational") is MetaphorType.ORIENTATIONAL


class TestValidation:
    def test_well_formed_step2(self):
        plan = validate_step_output(2, fenced(PLAN))
        assert len(plan.types) == 2
        assert len(plan.cues) == 3

    def test_unknown_type(self):
        bad = json.loads(json.dumps(PLAN))
        bad["metaphor_types"][0]["type"] = "Synesthetic"
        with pytest.raises(OutputViolation) as info:
            validate_step_output(2, fenced(bad))
        assert any("unknown metaphor type" in v for v in info.value.violations)

    def test_unmapped_cue(self):
        bad = json.loads(json.dumps(PLAN))
        bad["mapping"] = bad["mapping"][:2]
        with pytest.raises(OutputViolation) as info:
            validate_step_output(2, fenced(bad))
        assert any("visual_cues[2]" in v for v in info.value.violations)

    def test_mapping_to_missing_cue(self):
        bad = json.loads(json.dumps(PLAN))
        bad["mapping"].append({"state_aspect": "ghost", "cue": 9})
        with pytest.raises(OutputViolation):
            validate_step_output(2, fenced(bad))

    def test_step3_missing_atmosphere(self):
        bad = {k: v for k, v in ADAPTED.items() if k != "emotional_atmosphere"}
        with pytest.raises(OutputViolation) as info:
            validate_step_output(3, fenced(bad))
        assert any("emotional_atmosphere" in v for v in info.value.violations)

    def test_step3_nonintrusion_names_activity(self):
        assert validate_step_output(3, fenced(ADAPTED), CONCERT).nonintrusion_statement
        with pytest.raises(OutputViolation) as info:
            validate_step_output(3, fenced(ADAPTED), GALLERY)
        assert any("viewing artworks" in v for v in info.value.violations)

    def test_prose_without_block(self):
        with pytest.raises(OutputViolation) as info:
            validate_step_output(2, "I think joy looks like light.")
        assert info.value.step_id == 2
        assert "missing structured block" in info.value.violations[0]

    def test_last_block_wins(self):
        raw = fenced({"main_scene": "draft", "metaphorical_elements": ["x"]}) + fenced(
            {"main_scene": "final", "metaphorical_elements": ["y"], "detailed_modifiers": []}
        )
        assert validate_step_output(4, raw).main_scene == "final"

    def test_invalid_json_block(self):
        with pytest.raises(OutputViolation) as info:
            validate_step_output(1, "```json\n{not json}\n```")
        assert "not valid JSON" in info.value.violations[0]

    def test_step1(self):
        claim = validate_step_output(
            1, fenced({"emotional_range": "calm", "emotional_intensity": "Low", "family": "positive-deactivated"})
        )
        assert (claim.emotional_intensity, claim.family) == ("low", "positive-deactivated")

    def test_step1_bad_family(self):
        with pytest.raises(OutputViolation):
            validate_step_output(1, fenced({"emotional_range": "calm", "emotional_intensity": "low", "family": "happy"}))

    def test_step4_blank_elements(self):
        with pytest.raises(OutputViolation):
            validate_step_output(4, fenced({"main_scene": "stage", "metaphorical_elements": [" "]}))


class TestBuildPrompt:
    def test_step1_contents(self):
        request = build_step_prompt(1, ctx_for(VAPair(0.14, 0.85), GALLERY))
        text = request.system_text + "\n".join(request.user_turns)
        assert "0.14" in text and "0.85" in text
        for word in ("valence", "arousal", "displeasure", "pleasure", "deactivation", "activation"):
            assert word in text

    def test_step2_lists_every_definition(self):
        ctx = ctx_for(EXCITED, CONCERT)
        ctx.outputs[1] = validate_step_output(1, gpt().complete(build_step_prompt(1, ctx)))
        ctx.responses[1] = "r1"
        text = build_step_prompt(2, ctx).user_turns[-1]
        for name, entry in load_taxonomy().items():
            assert name in text
            assert entry["definition"] in text

    def test_step3_contains_primary_activity(self):
        ctx = ctx_for(EXCITED, GALLERY)
        for step in (1, 2):
            ctx.outputs[step] = object()
            ctx.responses[step] = f"r{step}"
        assert GALLERY.primary_activity in build_step_prompt(3, ctx).user_turns[-1]

    def test_deterministic_bytes(self):
        a = build_step_prompt(1, ctx_for(EXCITED, CONCERT))
        b = build_step_prompt(1, ctx_for(EXCITED, CONCERT))
        assert json.dumps(a.to_dict(), sort_keys=True).encode() == json.dumps(b.to_dict(), sort_keys=True).encode()

    def test_sequencing_error(self):
        with pytest.raises(SequencingError):
            build_step_prompt(3, ctx_for(EXCITED, CONCERT))

    def test_tags(self):
        tags = build_step_prompt(1, ctx_for(EXCITED, CONCERT)).tag_map
        assert tags["step"] == "step1"
        assert tags["octant"] == "excitement"
        assert tags["scene"] == "concert"


class TestRunCot:
    def test_excitement_concert(self):
        trace = run_cot(EXCITED, CONCERT, gpt())
        assert trace.status == "ok"
        assert set(trace.plan.type_names) == {"Ontological_EntitySubstance", "Orientational"}
        assert "softly rising wisps of light" in [c.description for c in trace.plan.cues]
        assert trace.prompt.main_scene == "Concert stage alive with dynamic lighting"

    def test_sadness_concert(self):
        trace = run_cot(SAD, CONCERT, gpt())
        cues = trace.plan.cues
        assert any("blue mist" in c.description for c in cues)
        assert any("below eye level" in c.description for c in cues)
        assert any(c.dynamics and "downward" in c.dynamics for c in cues)

    def test_conversational_history(self):
        backend = CountingBackend(gpt())
        run_cot(EXCITED, CONCERT, backend)
        step4 = backend.calls[-1]
        assert len(step4.user_turns) == 4
        assert len(step4.assistant_turns) == 3

    def test_isolated_mode(self):
        backend = CountingBackend(gpt())
        trace = run_cot(EXCITED, CONCERT, backend, CoTPolicy(chain_mode="isolated"))
        assert trace.status == "ok"
        assert all(len(r.user_turns) == 1 for r in backend.calls)
        assert "emotional_range" in backend.calls[1].user_turns[0]

    def test_trace_records_both_states(self):
        trace = run_cot(SAD, CONCERT, gpt())
        data = trace.to_dict()
        assert data["local_state"]["family"] == "negative-deactivated"
        assert data["steps"][0]["parsed"]["family"] == "negative-deactivated"
        assert len(data["trace_id"]) == 32

    def test_trace_id_ignores_timestamps(self):
        assert run_cot(EXCITED, CONCERT, gpt()).trace_id == run_cot(EXCITED, CONCERT, gpt()).trace_id

    def test_malformed_step2_one_repair(self):
        prose = "Joy looks like light. No structure here."

        def bad_step2(request):
            return prose if request.tag_map["step"] == "step2" else None

        backend = CountingBackend(gpt(), override=bad_step2)
        with pytest.raises(StepError) as info:
            run_cot(EXCITED, CONCERT, backend, CoTPolicy(max_repairs=1))
        step2_calls = [r for r in backend.calls if r.tag_map["step"] == "step2"]
        assert len(step2_calls) == 2
        assert step2_calls[1].tag_map["attempt"] == "2"
        assert "missing structured block" in step2_calls[1].user_turns[-1]
        err = info.value
        assert err.step_id == 2
        record = err.trace.steps[1]
        assert record.status == "failed"
        assert record.raw_response == prose
        assert record.repairs == 1
        assert err.trace.status == "failed"

    def test_repair_recovers(self):
        good = gpt()
        seen = []

        def first_bad(request):
            if request.tag_map["step"] == "step3" and not seen:
                seen.append(1)
                return "no block"
            return None

        trace = run_cot(EXCITED, CONCERT, CountingBackend(good, override=first_bad))
        assert trace.status == "ok"
        assert trace.steps[2].repairs == 1
        assert trace.steps[2].rejected_responses == ["no block"]

    def test_backend_error_carries_step(self):
        fixture = ScriptedFixture({k: v for k, v in load_fixture("builtin:gpt-4o").responses.items() if k[0] != "step3"})
        with pytest.raises(StepError) as info:
            run_cot(EXCITED, CONCERT, make_scripted(fixture))
        assert info.value.step_id == 3
        assert isinstance(info.value.__cause__, FixtureMissError)

    def test_replay_reproduces(self):
        trace = run_cot(SAD, CONCERT, gpt())
        data = json.loads(json.dumps(trace.to_dict()))
        replayed = replay_trace(data, gpt())
        assert replayed == [s["parsed"] for s in data["steps"]]


class TestRuleEngine:
    def state(self, family: str, intensity: str) -> InferredState:
        return InferredState(45.0, 1.0, "high", intensity, intensity, "excitement", family)

    def test_positive_activated_high(self):
        plan, adapted = rule_based_plan(self.state("positive-activated", "high"), CONCERT)
        assert set(plan.type_names) == {"Ontological_EntitySubstance", "Orientational"}
        text = json.dumps([plan.to_dict(), adapted.to_dict()]).lower()
        assert "sparkling lights" in text and "upward-rising" in text and "warm" in text

    def test_negative_deactivated_low(self):
        plan, adapted = rule_based_plan(self.state("negative-deactivated", "low"), CONCERT)
        text = json.dumps([plan.to_dict(), adapted.to_dict()]).lower()
        assert "mist" in text and ("downward" in text or "sinking" in text) and "cool" in text
        assert "Orientational" in plan.type_names

    @pytest.mark.parametrize(
        "family,intensity,scene_id", list(itertools.product(FAMILIES, BANDS, sorted(SCENES)))
    )
    def test_exhaustive(self, family, intensity, scene_id):
        scene = SCENES[scene_id]
        state = self.state(family, intensity)
        plan, adapted = rule_based_plan(state, scene)
        assert (plan, adapted) == rule_based_plan(state, scene)
        assert "Ontological_EntitySubstance" in plan.type_names
        assert "Structural" not in plan.type_names
        assert scene.primary_activity in adapted.nonintrusion_statement
        has_orientational = "Orientational" in plan.type_names
        if family == "neutral":
            assert plan.type_names == ["Ontological_EntitySubstance"]
            assert len(plan.cues) == 1
        else:
            assert has_orientational == (intensity != "medium")
        prompt = rule_based_prompt(state, scene)
        assert prompt.main_scene and prompt.metaphorical_elements

    def test_custom_scene_uses_wildcard(self):
        scene = SceneContext("lecture", "A virtual lecture hall.", "following the lecture")
        _, adapted = rule_based_plan(self.state("positive-deactivated", "low"), scene)
        assert "following the lecture" in adapted.nonintrusion_statement

    @pytest.mark.parametrize("scene_id", sorted(SCENES))
    def test_rule_backend_runs_every_octant(self, scene_id):
        for va in prototypical_va_pairs(8) + [VAPair(0.5, 0.5)]:
            trace = run_cot(va, SCENES[scene_id], RuleBasedBackend())
            assert trace.status == "ok"
            assert trace.claim.family == trace.local_state.family
