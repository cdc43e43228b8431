"""Batch orchestration over (reasoning backend x V-A pair x scene) cells."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping, Sequence

import httpx

from .affect import DEFAULT_GEOMETRY, CircumplexGeometry, VAPair, polar_of, prototypical_va_pairs
from .errors import BioMetaphorError, ConfigurationError, StepError
from .imaging import (
    DEFAULT_HEIGHT,
    DEFAULT_WIDTH,
    GenerationRequest,
    ImageBackend,
    ImageBackendConfig,
    make_image_backend,
)
from .metaphor import CoTPolicy, RuleBasedBackend, SceneContext, builtin_scenes, content_hash, run_cot
from .metaphor.prompts import CHAIN_MODES, template_version
from .packaging import MANIFEST_FILE, package
from .prompt import DEFAULT_MAX_CHARS, flatten
from .reasoning import (
    BackendConfig,
    ReasoningBackend,
    RemoteChatBackend,
    ScriptedBackend,
    builtin_fixture_path,
    load_fixture,
)

log = logging.getLogger(__name__)

RULE_ENGINE_ID = "rule-engine"
ENV_OVERRIDES = {
    "BIOMETAPHOR_OUTPUT_DIR": ("output_dir", str),
    "BIOMETAPHOR_CACHE_DIR": ("cache_dir", str),
    "BIOMETAPHOR_SEED": ("seed", int),
    "BIOMETAPHOR_CONCURRENCY": ("concurrency", int),
}


@dataclass(frozen=True)
class PipelineConfig:
    reasoning_backends: tuple[BackendConfig, ...] = ()
    image_backend: ImageBackendConfig = field(default_factory=ImageBackendConfig)
    geometry: CircumplexGeometry = DEFAULT_GEOMETRY
    scenes: tuple[SceneContext, ...] = ()
    dataset_count: int | None = 8
    dataset_pairs: tuple[VAPair, ...] | None = None
    output_dir: Path = Path("biometaphor-out")
    cache_dir: Path | None = None  # defaults to <output_dir>/cache
    seed: int = 0
    concurrency: int = 2
    use_rule_engine: bool = False
    chain_mode: str = "conversational"
    max_repairs: int = 2
    max_prompt_chars: int = DEFAULT_MAX_CHARS
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT

    def __post_init__(self) -> None:
        object.__setattr__(self, "reasoning_backends", tuple(self.reasoning_backends))
        object.__setattr__(self, "scenes", tuple(self.scenes))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        if self.cache_dir is not None:
            object.__setattr__(self, "cache_dir", Path(self.cache_dir))
        if self.dataset_pairs is not None:
            object.__setattr__(self, "dataset_pairs", tuple(self.dataset_pairs))

    def validate(self) -> None:
        if not self.reasoning_backends and not self.use_rule_engine:
            raise ConfigurationError("configure at least one reasoning backend or use_rule_engine")
        ids = [b.backend_id for b in self.all_backend_configs()]
        if len(set(ids)) != len(ids):
            raise ConfigurationError(f"duplicate backend ids: {ids}")
        if not self.scenes:
            raise ConfigurationError("configure at least one scene")
        scene_ids = [s.scene_id for s in self.scenes]
        if len(set(scene_ids)) != len(scene_ids):
            raise ConfigurationError(f"duplicate scene ids: {scene_ids}")
        if self.dataset_pairs is None and (self.dataset_count is None or self.dataset_count < 1):
            raise ConfigurationError("dataset needs count >= 1 or an explicit list of pairs")
        if self.dataset_pairs is not None and not self.dataset_pairs:
            raise ConfigurationError("dataset pair list is empty")
        if self.concurrency < 1:
            raise ConfigurationError("concurrency must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        if self.chain_mode not in CHAIN_MODES:
            raise ConfigurationError(f"chain_mode must be one of {CHAIN_MODES}")
        if self.max_repairs < 0:
            raise ConfigurationError("max_repairs must be nonnegative")
        if self.width != 2 * self.height or self.height < 1:
            raise ConfigurationError(f"panorama size must be 2:1, got {self.width}x{self.height}")

    def all_backend_configs(self) -> list[BackendConfig]:
        configs = list(self.reasoning_backends)
        if self.use_rule_engine and not any(b.kind == "rule" for b in configs):
            configs.append(
                BackendConfig(backend_id=RULE_ENGINE_ID, kind="rule", model_name="rule-table", temperature=0.0)
            )
        return configs

    def dataset(self) -> list[VAPair]:
        if self.dataset_pairs is not None:
            return list(self.dataset_pairs)
        return prototypical_va_pairs(self.dataset_count, self.geometry)

    @property
    def effective_cache_dir(self) -> Path:
        return self.cache_dir if self.cache_dir is not None else self.output_dir / "cache"

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> PipelineConfig:
        data = dict(data)
        known = {
            "reasoning_backends", "image_backend", "geometry", "scenes", "dataset", "output_dir",
            "cache_dir", "seed", "concurrency", "use_rule_engine", "chain_mode", "max_repairs",
            "max_prompt_chars", "width", "height",
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        kwargs: dict[str, Any] = {}
        try:
            kwargs["reasoning_backends"] = tuple(
                BackendConfig.from_dict(b) for b in data.get("reasoning_backends", [])
            )
            if "image_backend" in data:
                kwargs["image_backend"] = ImageBackendConfig.from_dict(data["image_backend"])
            if "geometry" in data:
                kwargs["geometry"] = CircumplexGeometry.from_dict(data["geometry"])
            kwargs["scenes"] = tuple(resolve_scene(s) for s in data.get("scenes", ["gallery", "sports", "concert"]))
            dataset = data.get("dataset", {"count": 8})
            if "pairs" in dataset:
                kwargs["dataset_pairs"] = tuple(_pair_from_json(p) for p in dataset["pairs"])
                kwargs["dataset_count"] = None
            else:
                kwargs["dataset_count"] = int(dataset.get("count", 8))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"invalid config: {exc}") from exc
        for name in ("output_dir", "cache_dir", "seed", "concurrency", "use_rule_engine",
                     "chain_mode", "max_repairs", "max_prompt_chars", "width", "height"):
            if name in data and data[name] is not None:
                kwargs[name] = data[name]
        return cls(**kwargs)

    def to_dict(self) -> dict:
        dataset = (
            {"pairs": [p.to_dict() for p in self.dataset_pairs]}
            if self.dataset_pairs is not None
            else {"count": self.dataset_count}
        )
        return {
            "reasoning_backends": [b.to_dict() for b in self.reasoning_backends],
            "image_backend": self.image_backend.to_dict(),
            "geometry": self.geometry.to_dict(),
            "scenes": [s.to_dict() for s in self.scenes],
            "dataset": dataset,
            "output_dir": str(self.output_dir),
            "cache_dir": str(self.cache_dir) if self.cache_dir else None,
            "seed": self.seed,
            "concurrency": self.concurrency,
            "use_rule_engine": self.use_rule_engine,
            "chain_mode": self.chain_mode,
            "max_repairs": self.max_repairs,
            "max_prompt_chars": self.max_prompt_chars,
            "width": self.width,
            "height": self.height,
        }


def _pair_from_json(p) -> VAPair:
    if isinstance(p, Mapping):
        return VAPair.from_dict(p)
    valence, arousal = p
    return VAPair(valence, arousal)


def resolve_scene(entry: str | Mapping) -> SceneContext:
    if isinstance(entry, str):
        scenes = builtin_scenes()
        if entry not in scenes:
            raise ConfigurationError(f"unknown scene {entry!r}; built-ins are {sorted(scenes)}")
        return scenes[entry]
    return SceneContext.from_dict(entry)


def mock_backend_configs() -> tuple[BackendConfig, ...]:
    """Two scripted backends standing in for GPT-4o and DeepSeek-Chat."""
    return (
        BackendConfig(
            backend_id="mock-deepseek-chat",
            kind="scripted",
            model_name="deepseek-chat",
            temperature=1.3,
            fixture="builtin:deepseek-chat",
            api_key_env="DEEPSEEK_API_KEY",
        ),
        BackendConfig(
            backend_id="mock-gpt-4o",
            kind="scripted",
            model_name="gpt-4o",
            temperature=1.0,
            fixture="builtin:gpt-4o",
        ),
    )


def mock_config(output_dir: str | Path = "biometaphor-out", **overrides) -> PipelineConfig:
    """Fully offline configuration: scripted reasoning, stub images, 8 pairs x 3 scenes."""
    base = dict(
        reasoning_backends=mock_backend_configs(),
        image_backend=ImageBackendConfig(),
        scenes=tuple(builtin_scenes().values()),
        dataset_count=8,
        output_dir=Path(output_dir),
    )
    base.update(overrides)
    return PipelineConfig(**base)


def load_config(
    path: str | Path | None = None,
    overrides: Mapping[str, Any] | None = None,
    *,
    mock: bool = False,
    environ: Mapping[str, str] | None = None,
) -> PipelineConfig:
    """Merge defaults < config file < environment < explicit overrides."""
    environ = os.environ if environ is None else environ
    data: dict[str, Any] = mock_config().to_dict() if mock else {}
    if path is not None:
        try:
            file_data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(file_data, dict):
            raise ConfigurationError("config file must hold a JSON object")
        if mock:
            # --mock swaps the backends but keeps the rest of the file
            file_data.pop("reasoning_backends", None)
            file_data.pop("image_backend", None)
        data.update(file_data)
    for var, (name, conv) in ENV_OVERRIDES.items():
        if var in environ:
            try:
                data[name] = conv(environ[var])
            except ValueError as exc:
                raise ConfigurationError(f"{var}: {exc}") from exc
    for name, value in (overrides or {}).items():
        if value is not None:
            data[name] = value
    return PipelineConfig.from_dict(data)


def build_reasoning_backend(
    cfg: BackendConfig,
    scenes: Sequence[SceneContext],
    transport: httpx.BaseTransport | None = None,
) -> ReasoningBackend:
    if cfg.kind == "remote":
        if not os.environ.get(cfg.api_key_env):
            raise ConfigurationError(
                f"backend {cfg.backend_id!r}: environment variable {cfg.api_key_env} is not set"
            )
        return RemoteChatBackend(cfg, transport=transport)
    if cfg.kind == "scripted":
        return ScriptedBackend(load_fixture(cfg.fixture or "builtin:gpt-4o"), cfg)
    scene_map = {**builtin_scenes(), **{s.scene_id: s for s in scenes}}
    return RuleBasedBackend(scene_map, cfg)


def _fixture_digest(cfg: BackendConfig) -> str | None:
    if cfg.kind != "scripted":
        return None
    ref = cfg.fixture or "builtin:gpt-4o"
    path = builtin_fixture_path(ref.removeprefix("builtin:")) if ref.startswith("builtin:") else Path(ref)
    try:
        return hashlib.sha256(path.read_bytes()).hexdigest()
    except OSError:
        return None


def derive_seed(global_seed: int, cell_key: str) -> int:
    """Per-cell 32-bit seed: SHA-256 of the global seed and the cell key."""
    digest = hashlib.sha256(f"{global_seed}|{cell_key}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def cache_key(
    backend: BackendConfig,
    va: VAPair,
    scene: SceneContext,
    image_request: Mapping[str, Any],
    *,
    template: str | None = None,
    chain_mode: str = "conversational",
    max_repairs: int = 2,
    max_prompt_chars: int = DEFAULT_MAX_CHARS,
    fixture_digest: str | None = None,
) -> str:
    return content_hash(
        {
            "backend_id": backend.backend_id,
            "backend_kind": backend.kind,
            "model": backend.model_name,
            "temperature": backend.temperature,
            "endpoint": backend.endpoint_url if backend.kind == "remote" else None,
            "fixture": fixture_digest,
            "va": va.to_dict(),
            "scene": scene.to_dict(),
            "template_version": template if template is not None else template_version(),
            "chain_mode": chain_mode,
            "max_repairs": max_repairs,
            "max_prompt_chars": max_prompt_chars,
            "image_request": dict(image_request),
        }
    )


@dataclass(frozen=True)
class Cell:
    backend_id: str
    va_index: int
    va: VAPair
    angle_deg: float
    scene: SceneContext

    def key(self) -> str:
        return f"{self.backend_id}|{self.va.valence!r}|{self.va.arousal!r}|{self.scene.scene_id}"


@dataclass
class CellOutcome:
    backend_id: str
    va: VAPair
    angle_deg: float
    scene_id: str
    status: str  # ok | cached | failed
    failed_step: str | None = None
    package_id: str | None = None
    package_dir: str | None = None
    trace_id: str | None = None
    cache_key: str | None = None
    seed: int | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "backend_id": self.backend_id,
            "va": self.va.to_dict(),
            "angle_deg": self.angle_deg,
            "scene_id": self.scene_id,
            "status": self.status,
            "failed_step": self.failed_step,
            "package_id": self.package_id,
            "package_dir": self.package_dir,
            "trace_id": self.trace_id,
            "cache_key": self.cache_key,
            "seed": self.seed,
            "error": self.error,
        }


@dataclass
class RunReport:
    cells: list[CellOutcome]
    wall_time_s: float
    started_at: str
    expected_cells: int

    @property
    def counts(self) -> dict[str, int]:
        out = {"total": len(self.cells), "ok": 0, "cached": 0, "failed": 0}
        for c in self.cells:
            out[c.status] += 1
        return out

    def to_dict(self) -> dict:
        return {
            "started_at": self.started_at,
            "wall_time_s": self.wall_time_s,
            "expected_cells": self.expected_cells,
            "counts": self.counts,
            "cells": [c.to_dict() for c in self.cells],
        }


class _JsonlWriter:
    """Serialized appender; each record is one line, flushed immediately."""

    def __init__(self, path: Path) -> None:
        self.path = path
        self._lock = threading.Lock()

    def append(self, record: Mapping) -> None:
        line = json.dumps(record, ensure_ascii=False, sort_keys=True)
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()


class PackageCache:
    """Append-only index from cache key to a written package directory."""

    def __init__(self, cache_dir: Path) -> None:
        cache_dir.mkdir(parents=True, exist_ok=True)
        self._writer = _JsonlWriter(cache_dir / "index.jsonl")
        self._lock = threading.Lock()
        self._entries: dict[str, dict] = {}
        if self._writer.path.is_file():
            for line in self._writer.path.read_text(encoding="utf-8").splitlines():
                try:
                    entry = json.loads(line)
                    self._entries[entry["cache_key"]] = entry
                except (json.JSONDecodeError, KeyError, TypeError):
                    log.warning("skipping corrupt cache index line")

    def lookup(self, key: str) -> dict | None:
        with self._lock:
            entry = self._entries.get(key)
        if entry and (Path(entry["package_dir"]) / MANIFEST_FILE).is_file():
            return entry
        return None

    def record(self, key: str, entry: dict) -> None:
        entry = {"cache_key": key, **entry}
        with self._lock:
            self._writer.append(entry)
            self._entries[key] = entry


def _check_writable(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=path, prefix=".probe-"):
            pass
    except OSError as exc:
        raise ConfigurationError(f"output directory {path} is not writable: {exc}") from exc


class BatchRunner:
    """Runs cells against prepared backends; shared by ``run_batch`` and single generation."""

    def __init__(
        self,
        config: PipelineConfig,
        *,
        backends: Mapping[str, ReasoningBackend] | None = None,
        image_backend: ImageBackend | None = None,
        http_transport: httpx.BaseTransport | None = None,
    ) -> None:
        config.validate()
        _check_writable(config.output_dir)
        self.config = config
        self.backend_configs = {b.backend_id: b for b in config.all_backend_configs()}
        if backends is None:
            backends = {
                bid: build_reasoning_backend(cfg, config.scenes, http_transport)
                for bid, cfg in self.backend_configs.items()
            }
        self.backends = dict(backends)
        self.image_backend = image_backend or make_image_backend(config.image_backend, transport=http_transport)
        self.cache = PackageCache(config.effective_cache_dir)
        self.runs = _JsonlWriter(config.output_dir / "runs.jsonl")
        self.policy = CoTPolicy(max_repairs=config.max_repairs, chain_mode=config.chain_mode)
        self._fixture_digests = {bid: _fixture_digest(cfg) for bid, cfg in self.backend_configs.items()}

    def cells(self) -> list[Cell]:
        cells = []
        for idx, va in enumerate(self.config.dataset()):
            angle, _ = polar_of(va, self.config.geometry)
            for bid in self.backends:
                for scene in self.config.scenes:
                    cells.append(Cell(bid, idx, va, angle, scene))
        cells.sort(key=lambda c: (c.backend_id, c.angle_deg, c.va_index, c.scene.scene_id))
        return cells

    def image_params(self, cell: Cell) -> dict:
        return {
            "image_backend": self.image_backend.backend_id,
            "seed": derive_seed(self.config.seed, cell.key()),
            "width": self.config.width,
            "height": self.config.height,
            "panorama": True,
        }

    def cell_cache_key(self, cell: Cell) -> str:
        cfg = self.backends[cell.backend_id].config
        return cache_key(
            cfg,
            cell.va,
            cell.scene,
            self.image_params(cell),
            chain_mode=self.config.chain_mode,
            max_repairs=self.config.max_repairs,
            max_prompt_chars=self.config.max_prompt_chars,
            fixture_digest=self._fixture_digests.get(cell.backend_id),
        )

    def run_cell(self, cell: Cell) -> CellOutcome:
        params = self.image_params(cell)
        key = self.cell_cache_key(cell)
        outcome = CellOutcome(
            backend_id=cell.backend_id,
            va=cell.va,
            angle_deg=cell.angle_deg,
            scene_id=cell.scene.scene_id,
            status="failed",
            cache_key=key,
            seed=params["seed"],
        )
        hit = self.cache.lookup(key)
        if hit is not None:
            outcome.status = "cached"
            outcome.package_id = hit["package_id"]
            outcome.package_dir = hit["package_dir"]
            outcome.trace_id = hit.get("trace_id")
            return outcome

        stage = "reasoning"
        trace = None
        try:
            trace = run_cot(
                cell.va, cell.scene, self.backends[cell.backend_id], self.policy, self.config.geometry
            )
            outcome.trace_id = trace.trace_id
            stage = "prompt"
            prompt_text = flatten(trace.prompt, self.config.max_prompt_chars)
            stage = "generate"
            request = GenerationRequest(
                prompt_text, params["seed"], self.config.width, self.config.height, panorama=True
            )
            result = self.image_backend.generate(request)
            stage = "package"
            pkg = package(result, trace, cell.scene, self.config.output_dir, image_prompt=prompt_text)
        except StepError as exc:
            outcome.failed_step = f"step{exc.step_id}"
            outcome.error = str(exc)
            trace = exc.trace
            if trace is not None:
                outcome.trace_id = trace.trace_id
        except Exception as exc:  # one cell must never take down the batch
            log.exception("cell %s failed during %s", cell.key(), stage)
            outcome.failed_step = stage
            outcome.error = f"{type(exc).__name__}: {exc}"
        else:
            outcome.status = "ok"
            outcome.package_id = pkg.package_id
            outcome.package_dir = str(pkg.root)
            self.cache.record(
                key,
                {"package_id": pkg.package_id, "package_dir": str(pkg.root), "trace_id": trace.trace_id},
            )
        self.runs.append(
            {
                "recorded_at": datetime.now(timezone.utc).isoformat(timespec="milliseconds"),
                "cell": outcome.to_dict(),
                "image_request": {k: v for k, v in params.items()},
                "trace": trace.to_dict() if trace is not None else None,
            }
        )
        return outcome

    def run(self, cells: Sequence[Cell] | None = None) -> RunReport:
        cells = self.cells() if cells is None else list(cells)
        started = datetime.now(timezone.utc).isoformat(timespec="seconds")
        t0 = time.perf_counter()
        with ThreadPoolExecutor(max_workers=self.config.concurrency) as pool:
            outcomes = list(pool.map(self.run_cell, cells))
        report = RunReport(outcomes, time.perf_counter() - t0, started, len(cells))
        return report


def run_batch(
    config: PipelineConfig,
    *,
    backends: Mapping[str, ReasoningBackend] | None = None,
    image_backend: ImageBackend | None = None,
    http_transport: httpx.BaseTransport | None = None,
) -> RunReport:
    """Run every cell, write ``report.json`` and append traces to ``runs.jsonl``.

    Cells whose cache key already maps to a package are reported ``cached``
    and make no backend calls.
    """
    runner = BatchRunner(config, backends=backends, image_backend=image_backend, http_transport=http_transport)
    report = runner.run()
    out = config.output_dir / "report.json"
    tmp = out.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    os.replace(tmp, out)
    return report


def generate_one(
    config: PipelineConfig,
    va: VAPair,
    scene: SceneContext,
    backend_id: str | None = None,
    *,
    backends: Mapping[str, ReasoningBackend] | None = None,
    image_backend: ImageBackend | None = None,
    http_transport: httpx.BaseTransport | None = None,
) -> CellOutcome:
    """Run a single cell outside the batch grid."""
    runner = BatchRunner(config, backends=backends, image_backend=image_backend, http_transport=http_transport)
    if backend_id is None:
        backend_id = next(iter(runner.backends))
    if backend_id not in runner.backends:
        raise ConfigurationError(f"unknown backend {backend_id!r}; have {sorted(runner.backends)}")
    angle, _ = polar_of(va, config.geometry)
    return runner.run_cell(Cell(backend_id, 0, va, angle, scene))
