from __future__ import annotations

import base64
import io
import json
import os
import random

import pytest
from PIL import Image

from biometaphor.affect import VAPair, infer_state
from biometaphor.errors import AspectError, DecodeError, PackageError
from biometaphor.imaging import GenerationRequest, ImageResult, stub_generate
from biometaphor.metaphor import CoTTrace, builtin_scenes, run_cot
from biometaphor.packaging import (
    decode_image,
    package,
    package_id_for,
    validate_package,
    validate_panorama,
)
from biometaphor.prompt import flatten
from biometaphor.reasoning import load_fixture, make_scripted

CONCERT = builtin_scenes()["concert"]


def png_bytes(width: int, height: int) -> bytes:
    buf = io.BytesIO()
    Image.new("RGB", (width, height), (200, 100, 50)).save(buf, format="PNG")
    return buf.getvalue()


@pytest.fixture(scope="module")
def trace():
    return run_cot(VAPair(0.854, 0.854), CONCERT, make_scripted(load_fixture("builtin:gpt-4o")))


@pytest.fixture(scope="module")
def result(trace):
    return stub_generate(GenerationRequest(flatten(trace.prompt), 42, 512, 256))


def tree(path) -> list[str]:
    return sorted(str(p.relative_to(path)) for p in path.rglob("*"))


class TestDecode:
    def test_canonical_vector(self):
        assert decode_image("aGVsbG8=") == b"hello"

    def test_one_mib_round_trip(self):
        data = random.Random(0).randbytes(1 << 20)
        assert decode_image(base64.b64encode(data).decode()) == data

    @pytest.mark.parametrize("k", [0, 1, 5, 7, 100])
    def test_illegal_character_offset(self, k):
        payload = list(base64.b64encode(bytes(range(90))).decode())
        payload[k] = "*"
        with pytest.raises(DecodeError) as info:
            decode_image("".join(payload))
        assert info.value.offset == k
        assert f"offset {k}" in str(info.value)

    def test_url_safe_alphabet_rejected(self):
        with pytest.raises(DecodeError) as info:
            decode_image("ab-_")
        assert info.value.offset == 2

    def test_data_after_padding(self):
        with pytest.raises(DecodeError) as info:
            decode_image("aGk=aGk=")
        assert info.value.offset == 4

    def test_bad_length(self):
        with pytest.raises(DecodeError):
            decode_image("aGVsbG8")


class TestPanorama:
    def test_valid(self):
        assert validate_panorama(png_bytes(2048, 1024)) == (2048, 1024)

    def test_aspect(self):
        with pytest.raises(AspectError) as info:
            validate_panorama(png_bytes(1000, 999))
        assert (info.value.width, info.value.height) == (1000, 999)

    def test_truncated(self):
        data = png_bytes(512, 256)
        with pytest.raises(DecodeError):
            validate_panorama(data[: len(data) // 2])

    def test_garbage(self):
        with pytest.raises(DecodeError):
            validate_panorama(b"not an image")


class TestPackage:
    def test_layout(self, tmp_path, trace, result):
        pkg = package(result, trace, CONCERT, tmp_path)
        assert pkg.root == tmp_path / "packages" / "concert" / pkg.package_id
        assert sorted(os.listdir(pkg.root)) == ["manifest.json", "panorama.png", "trace.json"]
        assert decode_image(result.payload_b64) == (pkg.root / "panorama.png").read_bytes()
        manifest = pkg.manifest
        assert manifest["scene_id"] == "concert"
        assert manifest["trace_id"] == trace.trace_id
        assert manifest["image"]["width"] == 512
        assert manifest["va"] == {"valence": 0.854, "arousal": 0.854}
        assert set(manifest["metaphor_types"]) == {"Ontological_EntitySubstance", "Orientational"}
        assert json.loads((pkg.root / "trace.json").read_text())["trace_id"] == trace.trace_id
        assert validate_package(pkg.root).package_id == pkg.package_id

    def test_idempotent(self, tmp_path, trace, result):
        first = package(result, trace, CONCERT, tmp_path)
        second = package(result, trace, CONCERT, tmp_path)
        assert first.package_id == second.package_id
        assert len(os.listdir(tmp_path / "packages" / "concert")) == 1

    def test_id_independent_of_out_dir(self, tmp_path, trace, result):
        a = package(result, trace, CONCERT, tmp_path / "a")
        b = package(result, trace, CONCERT, tmp_path / "b")
        assert a.package_id == b.package_id
        assert a.package_id == package_id_for(decode_image(result.payload_b64), trace.trace_id)

    def test_square_rejected_nothing_written(self, tmp_path, trace):
        square = ImageResult(base64.b64encode(png_bytes(1024, 1024)).decode(), "png", 1024, 1024, 1, "stub")
        (tmp_path / "keep.txt").write_text("x")
        before = tree(tmp_path)
        with pytest.raises(AspectError):
            package(square, trace, CONCERT, tmp_path)
        assert tree(tmp_path) == before

    def test_interrupted_write_leaves_nothing(self, tmp_path, trace, result, monkeypatch):
        def boom(src, dst):
            raise OSError("disk full")

        monkeypatch.setattr(os, "rename", boom)
        with pytest.raises(OSError):
            package(result, trace, CONCERT, tmp_path)
        assert os.listdir(tmp_path / "packages" / "concert") == []

    def test_temp_dir_never_validates(self, tmp_path, trace, result):
        pkg = package(result, trace, CONCERT, tmp_path)
        tmp = pkg.root.parent / ".tmp-interrupted"
        os.rename(pkg.root, tmp)
        with pytest.raises(PackageError):
            validate_package(tmp)

    def test_traversal_rejected(self, tmp_path, trace, result):
        pkg = package(result, trace, CONCERT, tmp_path)
        manifest = pkg.manifest
        manifest["image"]["file"] = "../../../etc/passwd"
        (pkg.root / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(PackageError, match="escapes"):
            validate_package(pkg.root)

    def test_tampered_image_detected(self, tmp_path, trace, result):
        pkg = package(result, trace, CONCERT, tmp_path)
        (pkg.root / "panorama.png").write_bytes(png_bytes(512, 256))
        with pytest.raises(PackageError):
            validate_package(pkg.root)

    def test_failed_trace_refused(self, tmp_path, result):
        failed = CoTTrace(VAPair(0.5, 0.5), CONCERT, "x", "m", 1.0, "v", "conversational", infer_state(VAPair(0.5, 0.5)), status="failed")
        with pytest.raises(PackageError):
            package(result, failed, CONCERT, tmp_path)
