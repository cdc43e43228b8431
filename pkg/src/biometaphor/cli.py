"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .affect import CircumplexGeometry, VAPair, infer_state, prototypical_va_pairs
from .errors import BioMetaphorError, ConfigurationError, PackageError
from .metaphor import SceneContext, builtin_scenes
from .metaphor.prompts import CoTContext, build_step_prompt
from .packaging import validate_package
from .pipeline import generate_one, load_config, run_batch

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2; usage errors are 1 here
        raise UsageError(f"{self.prog}: {message}")


def _geometry(args) -> CircumplexGeometry:
    try:
        return CircumplexGeometry(VAPair(args.center_valence, args.center_arousal), args.radius)
    except ValueError as exc:
        raise UsageError(f"invalid geometry: {exc}") from None


def _va(args) -> VAPair:
    try:
        return VAPair(args.valence, args.arousal)
    except ValueError as exc:
        raise UsageError(f"range error: {exc}") from None


def cmd_dataset(args) -> int:
    if args.count < 1:
        raise UsageError("--count must be a positive integer")
    pairs = prototypical_va_pairs(args.count, _geometry(args))
    print(json.dumps([[p.valence, p.arousal] for p in pairs]))
    return EXIT_OK


def cmd_infer(args) -> int:
    state = infer_state(_va(args), _geometry(args))
    print(json.dumps(state.to_dict(), indent=2))
    return EXIT_OK


def _resolve_scene(args) -> SceneContext:
    if args.scene_file:
        try:
            data = json.loads(Path(args.scene_file).read_text(encoding="utf-8"))
            scene = SceneContext.from_dict(data)
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
            raise UsageError(f"invalid scene file: {exc}") from None
        if scene.scene_id != args.scene:
            raise UsageError(f"scene file defines {scene.scene_id!r}, not {args.scene!r}")
        return scene
    scenes = builtin_scenes()
    if args.scene not in scenes:
        raise UsageError(f"unknown scene {args.scene!r} (built-ins: {', '.join(sorted(scenes))}); pass --scene-file")
    return scenes[args.scene]


def _overrides(args) -> dict:
    return {
        "output_dir": str(args.out) if args.out else None,
        "seed": args.seed,
        "use_rule_engine": True if args.rule_engine else None,
    }


def cmd_generate(args) -> int:
    va = _va(args)
    scene = _resolve_scene(args)
    if args.dry_run:
        config = load_config(args.config, _overrides(args), mock=args.mock)
        state = infer_state(va, config.geometry)
        ctx = CoTContext(va, scene, state, geometry=config.geometry)
        request = build_step_prompt(1, ctx)
        print(request.system_text)
        print()
        print(request.user_turns[0])
        return EXIT_OK
    if not args.mock and not args.config:
        raise UsageError("generate needs --config or --mock")
    overrides = _overrides(args)
    overrides["scenes"] = [scene.to_dict()]
    config = load_config(args.config, overrides, mock=args.mock)
    outcome = generate_one(config, va, scene, args.backend)
    print(json.dumps(outcome.to_dict(), indent=2))
    return EXIT_OK if outcome.status in ("ok", "cached") else EXIT_RUNTIME


def cmd_batch(args) -> int:
    if not args.mock and not args.config:
        raise UsageError("batch needs --config or --mock")
    overrides = _overrides(args)
    overrides["concurrency"] = args.concurrency
    config = load_config(args.config, overrides, mock=args.mock)
    report = run_batch(config)
    summary = {
        "report": str(config.output_dir / "report.json"),
        "counts": report.counts,
        "wall_time_s": round(report.wall_time_s, 3),
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_validate_package(args) -> int:
    try:
        pkg = validate_package(args.path)
    except (PackageError, ValueError) as exc:
        print(f"invalid package: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps({"package_id": pkg.package_id, "scene_id": pkg.scene_id, "valid": True}))
    return EXIT_OK


def _add_geometry(p: argparse.ArgumentParser) -> None:
    p.add_argument("--center-valence", type=float, default=0.5)
    p.add_argument("--center-arousal", type=float, default=0.5)
    p.add_argument("--radius", type=float, default=0.5)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON pipeline config")
    p.add_argument("--mock", action="store_true", help="scripted reasoning and stub image backends")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seed", type=int, help="global seed")
    p.add_argument("--rule-engine", action="store_true", help="add the rule-table planner as a backend")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="biometaphor", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("dataset", help="print evenly spaced prototypical V-A pairs")
    p.add_argument("--count", type=int, default=8)
    _add_geometry(p)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("infer", help="print the inferred state for a V-A pair")
    p.add_argument("valence", type=float)
    p.add_argument("arousal", type=float)
    _add_geometry(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("generate", help="produce one scene package")
    p.add_argument("valence", type=float)
    p.add_argument("arousal", type=float)
    p.add_argument("--scene", required=True)
    p.add_argument("--scene-file", type=Path)
    p.add_argument("--backend", help="reasoning backend id (default: first configured)")
    p.add_argument("--dry-run", action="store_true", help="print the step-1 prompt and exit")
    _add_run_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("batch", help="run every backend x pair x scene cell")
    p.add_argument("--concurrency", type=int)
    _add_run_flags(p)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("validate-package", help="check a scene package directory")
    p.add_argument("path", type=Path)
    p.set_defaults(func=cmd_validate_package)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BioMetaphorError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
