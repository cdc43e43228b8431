"""Engine-loadable scene packages: decoded panorama + trace + manifest.

Layout::

    <out_dir>/packages/<scene_id>/<package_id>/
        panorama.png
        trace.json
        manifest.json
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import os
import shutil
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Final

from PIL import Image

from .errors import AspectError, DecodeError, PackageError
from .imaging import ImageResult, sniff_format
from .metaphor.types import CoTTrace, SceneContext

_B64_ALPHABET: Final[frozenset[str]] = frozenset(
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/"
)
MANIFEST_VERSION: Final[int] = 1
PANORAMA_STEM: Final[str] = "panorama"
TRACE_FILE: Final[str] = "trace.json"
MANIFEST_FILE: Final[str] = "manifest.json"


def decode_image(payload_b64: str) -> bytes:
    """Strict standard-alphabet base64 decode; errors report the offending offset."""
    if isinstance(payload_b64, bytes):
        payload_b64 = payload_b64.decode("ascii", errors="replace")
    n = len(payload_b64)
    padding_from = n
    for i, ch in enumerate(payload_b64):
        if ch == "=":
            padding_from = i
            break
        if ch not in _B64_ALPHABET:
            raise DecodeError(f"illegal base64 character {ch!r} at offset {i}", offset=i)
    tail = payload_b64[padding_from:]
    for j, ch in enumerate(tail):
        if ch != "=":
            raise DecodeError(
                f"illegal base64 character {ch!r} at offset {padding_from + j}",
                offset=padding_from + j,
            )
    if len(tail) > 2 or n % 4:
        raise DecodeError(f"base64 length {n} is not a padded multiple of 4", offset=n)
    try:
        return base64.b64decode(payload_b64, validate=True)
    except ValueError as exc:  # non-canonical trailing bits and the like
        raise DecodeError(f"malformed base64: {exc}", offset=n) from None


def validate_panorama(data: bytes) -> tuple[int, int]:
    """(width, height) of a fully decodable 2:1 image."""
    try:
        with Image.open(io.BytesIO(data)) as img:
            img.load()
            width, height = img.size
    except Exception as exc:
        raise DecodeError(f"undecodable image: {exc}") from None
    if width != 2 * height:
        raise AspectError(width, height)
    return width, height


@dataclass(frozen=True)
class ScenePackage:
    package_id: str
    scene_id: str
    root: Path
    panorama_file: str
    manifest_file: str
    trace_file: str
    trace_id: str
    created_at: str

    @property
    def manifest(self) -> dict:
        return json.loads((self.root / self.manifest_file).read_text(encoding="utf-8"))


def package_id_for(panorama: bytes, trace_id: str) -> str:
    h = hashlib.sha256()
    h.update(hashlib.sha256(panorama).digest())
    h.update(trace_id.encode("utf-8"))
    return h.hexdigest()[:32]


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, ensure_ascii=False, sort_keys=True) + "\n", encoding="utf-8")


def _fsync_dir(path: Path) -> None:
    try:
        fd = os.open(path, os.O_RDONLY)
    except OSError:
        return
    try:
        os.fsync(fd)
    except OSError:
        pass
    finally:
        os.close(fd)


def package(
    result: ImageResult,
    trace: CoTTrace,
    scene: SceneContext,
    out_dir: str | Path,
    *,
    image_prompt: str | None = None,
) -> ScenePackage:
    """Write the package into a temp dir, then rename it into place.

    Re-packaging identical content returns the existing package unchanged.
    """
    data = decode_image(result.payload_b64)
    width, height = validate_panorama(data)  # raises before anything touches disk
    fmt = sniff_format(data)
    if fmt is None or fmt != result.format:
        raise PackageError(f"image bytes are {fmt!r}, result declares {result.format!r}")
    if (width, height) != (result.width, result.height):
        raise PackageError(
            f"image is {width}x{height}, result declares {result.width}x{result.height}"
        )
    if trace.status != "ok" or trace.prompt is None:
        raise PackageError("only successful traces can be packaged")

    pkg_id = package_id_for(data, trace.trace_id)
    parent = Path(out_dir) / "packages" / scene.scene_id
    final = parent / pkg_id
    panorama_name = f"{PANORAMA_STEM}.{'png' if fmt == 'png' else 'jpg'}"
    if (final / MANIFEST_FILE).is_file():
        manifest = json.loads((final / MANIFEST_FILE).read_text(encoding="utf-8"))
        return _from_manifest(final, manifest)

    created_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
    manifest = {
        "format_version": MANIFEST_VERSION,
        "package_id": pkg_id,
        "scene_id": scene.scene_id,
        "scene": scene.to_dict(),
        "created_at": created_at,
        "va": trace.va.to_dict(),
        "inferred_state": trace.local_state.to_dict(),
        "metaphor_types": trace.plan.type_names if trace.plan else [],
        "prompt": trace.prompt.to_dict(),
        "image_prompt": image_prompt,
        "backends": {"reasoning": trace.backend_id, "image": result.backend_id},
        "image": {
            "file": panorama_name,
            "width": width,
            "height": height,
            "format": fmt,
            "seed": result.seed_used,
            "projection": "equirectangular",
        },
        "trace_file": TRACE_FILE,
        "trace_id": trace.trace_id,
    }

    parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".tmp-", dir=parent))
    try:
        (tmp / panorama_name).write_bytes(data)
        _write_json(tmp / TRACE_FILE, trace.to_dict())
        _write_json(tmp / MANIFEST_FILE, manifest)
        try:
            os.rename(tmp, final)
        except OSError:
            if (final / MANIFEST_FILE).is_file():  # a concurrent writer won the race
                shutil.rmtree(tmp, ignore_errors=True)
                return _from_manifest(final, json.loads((final / MANIFEST_FILE).read_text("utf-8")))
            raise
        _fsync_dir(parent)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return _from_manifest(final, manifest)


def _from_manifest(root: Path, manifest: dict) -> ScenePackage:
    return ScenePackage(
        package_id=manifest["package_id"],
        scene_id=manifest["scene_id"],
        root=root,
        panorama_file=manifest["image"]["file"],
        manifest_file=MANIFEST_FILE,
        trace_file=manifest["trace_file"],
        trace_id=manifest["trace_id"],
        created_at=manifest["created_at"],
    )


def _inside(root: Path, rel: str) -> Path:
    if not isinstance(rel, str) or not rel or "\\" in rel or rel.startswith("/"):
        raise PackageError(f"manifest path {rel!r} is not a relative forward-slash path")
    target = (root / rel).resolve()
    if not target.is_relative_to(root.resolve()):
        raise PackageError(f"manifest path {rel!r} escapes the package directory")
    return target


def validate_package(root: str | Path) -> ScenePackage:
    """Check a package directory end to end; raises :class:`PackageError` or a decode error."""
    root = Path(root)
    mpath = root / MANIFEST_FILE
    if not mpath.is_file():
        raise PackageError(f"{root} has no {MANIFEST_FILE}")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
        image = manifest["image"]
        pano = _inside(root, image["file"])
        trace_path = _inside(root, manifest["trace_file"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise PackageError(f"malformed manifest in {root}: {exc}") from None
    if not pano.is_file() or not trace_path.is_file():
        raise PackageError(f"{root} is missing its panorama or trace file")
    data = pano.read_bytes()
    width, height = validate_panorama(data)
    if (width, height) != (image.get("width"), image.get("height")):
        raise PackageError(f"panorama is {width}x{height}, manifest says {image.get('width')}x{image.get('height')}")
    trace = json.loads(trace_path.read_text(encoding="utf-8"))
    if trace.get("trace_id") != manifest.get("trace_id"):
        raise PackageError("trace.json does not match the manifest trace_id")
    if package_id_for(data, manifest["trace_id"]) != manifest.get("package_id"):
        raise PackageError("package_id does not match the package content")
    # an unrenamed temp dir (interrupted write) never validates
    if root.name != manifest["package_id"]:
        raise PackageError(f"directory name {root.name!r} is not the package_id")
    return _from_manifest(root, manifest)
