"""Four-step chain: state inference, metaphor construction, event adaptation, prompt."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Mapping

from ..affect import (
    DEFAULT_GEOMETRY,
    DEFAULT_OCTANT_TABLE,
    CircumplexGeometry,
    OctantTable,
    VAPair,
    infer_state,
)
from ..errors import BioMetaphorError, OutputViolation, StepError
from ..reasoning import ChatRequest, ReasoningBackend
from .prompts import CHAIN_MODES, CoTContext, build_step_prompt, repair_request, template_version
from .types import CoTTrace, SceneContext, StepRecord
from .validation import validate_step_output

log = logging.getLogger(__name__)


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def content_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CoTPolicy:
    max_repairs: int = 2
    chain_mode: str = "conversational"

    def __post_init__(self) -> None:
        if self.max_repairs < 0:
            raise ValueError("max_repairs must be nonnegative")
        if self.chain_mode not in CHAIN_MODES:
            raise ValueError(f"chain_mode must be one of {CHAIN_MODES}")


def _finish(trace: CoTTrace, status: str, failed_step: int | None = None) -> None:
    trace.status = status
    trace.failed_step = failed_step
    trace.finished_at = utc_now()
    trace.trace_id = content_hash(trace.content())[:32]


def run_cot(
    va: VAPair,
    scene: SceneContext,
    backend: ReasoningBackend,
    policy: CoTPolicy = CoTPolicy(),
    geometry: CircumplexGeometry = DEFAULT_GEOMETRY,
    table: OctantTable = DEFAULT_OCTANT_TABLE,
) -> CoTTrace:
    """Run all four steps against ``backend`` and return the full trace.

    A response that fails validation is answered with a repair message
    quoting the violations, at most ``policy.max_repairs`` times. A step that
    still fails, or a backend error, raises :class:`StepError` whose
    ``trace`` keeps every raw response seen so far.
    """
    state = infer_state(va, geometry, table)
    cfg = backend.config
    trace = CoTTrace(
        va=va,
        scene=scene,
        backend_id=backend.backend_id,
        model_name=cfg.model_name,
        temperature=cfg.temperature,
        template_version=template_version(),
        chain_mode=policy.chain_mode,
        local_state=state,
        started_at=utc_now(),
    )
    ctx = CoTContext(va, scene, state, cfg.temperature, cfg.max_tokens, geometry)

    for step_id in (1, 2, 3, 4):
        base = build_step_prompt(step_id, ctx, policy.chain_mode)
        record = StepRecord(step_id, base.to_dict(), started_at=utc_now())
        trace.steps.append(record)
        rejected: list[str] = []
        problems: list[list[str]] = []
        request = base
        while True:
            try:
                raw = backend.complete(request)
            except BioMetaphorError as exc:
                record.status = "failed"
                record.repairs = len(rejected)
                record.rejected_responses = rejected
                record.violations = [f"backend error: {exc}"]
                record.finished_at = utc_now()
                _finish(trace, "failed", step_id)
                err = StepError(f"step {step_id} on {backend.backend_id}: {exc}", step_id, trace)
                raise err from exc
            try:
                parsed = validate_step_output(step_id, raw, scene)
                break
            except OutputViolation as exc:
                if len(rejected) >= policy.max_repairs:
                    record.raw_response = raw
                    record.status = "failed"
                    record.repairs = len(rejected)
                    record.rejected_responses = rejected
                    record.violations = exc.violations
                    record.finished_at = utc_now()
                    _finish(trace, "failed", step_id)
                    raise StepError(
                        f"step {step_id} on {backend.backend_id} rejected after "
                        f"{len(rejected)} repairs: {'; '.join(exc.violations)}",
                        step_id,
                        trace,
                    ) from exc
                log.info("step %d violations %s; requesting repair", step_id, exc.violations)
                rejected.append(raw)
                problems.append(exc.violations)
                request = repair_request(base, step_id, rejected, problems)

        record.raw_response = raw
        record.parsed = parsed.to_dict()
        record.status = "ok"
        record.repairs = len(rejected)
        record.rejected_responses = rejected
        record.violations = [v for vs in problems for v in vs]
        record.finished_at = utc_now()
        ctx.outputs[step_id] = parsed
        ctx.responses[step_id] = raw

    trace.claim = ctx.outputs[1]
    trace.plan = ctx.outputs[2]
    trace.adapted = ctx.outputs[3]
    trace.prompt = ctx.outputs[4]
    _finish(trace, "ok")
    return trace


def replay_trace(trace: Mapping, backend: ReasoningBackend) -> list[dict]:
    """Re-issue each recorded step request; return the freshly parsed structures."""
    scene = SceneContext.from_dict(trace["scene"])
    out = []
    for record in trace["steps"]:
        request = ChatRequest.from_dict(record["request"])
        raw = backend.complete(request)
        out.append(validate_step_output(record["step_id"], raw, scene).to_dict())
    return out
