import dataclasses
import json

import numpy as np
import pytest
from PIL import Image

import src.dataset_builder as dataset_builder
from src.config import BuildConfig
from src.dataset_builder import (
    MANIFEST_NAME,
    PARTIAL_NAME,
    build,
    load_manifest,
    require_manifest,
    shard_dir,
    summarize_build,
    summarize_verify,
    verify,
)
from src.errors import ConfigurationError, DatasetBuildError, GeometryError


def dataset_files(root):
    return sorted(p.relative_to(root).as_posix() for p in root.rglob("*") if p.is_file())


def flip_byte(path, offset: int = -1) -> None:
    blob = bytearray(path.read_bytes())
    blob[offset] ^= 0xFF
    path.write_bytes(bytes(blob))


class TestBuild:
    def test_single_pair_layout(self, tmp_path, small_build):
        cfg = dataclasses.replace(small_build, count=1)
        manifest = build(cfg, tmp_path)
        assert dataset_files(tmp_path) == [
            MANIFEST_NAME,
            "shard_00000/000000_clean.raw",
            "shard_00000/000000_noisy.raw",
        ]
        assert manifest.totals == {"requested": 1, "written": 1, "skipped": 0}

    def test_manifest_contents(self, tmp_path, small_build):
        build(small_build, tmp_path)
        lines = (tmp_path / MANIFEST_NAME).read_text().splitlines()
        header = json.loads(lines[0])
        assert header["kind"] == "header"
        assert header["config_hash"] == small_build.config_hash()
        assert header["clamp_policy"] == "clamp-0-1"
        pairs = [json.loads(line) for line in lines[1:]]
        assert [p["pair_id"] for p in pairs] == [0, 1, 2]
        assert len({p["scene_seed"] for p in pairs}) == 3
        assert {p["profile"] for p in pairs} == {"oracle/unity"}
        assert all(0.25 <= p["gain_scale"] <= 4.0 for p in pairs)

    def test_rebuild_is_bit_identical(self, tmp_path, small_build):
        a, b = tmp_path / "a", tmp_path / "b"
        build(small_build, a)
        build(small_build, b)
        assert dataset_files(a) == dataset_files(b)
        for rel in dataset_files(a):
            assert (a / rel).read_bytes() == (b / rel).read_bytes()

    def test_worker_pool_matches_serial(self, tmp_path, small_build):
        serial = build(small_build, tmp_path / "serial")
        pooled = build(small_build, tmp_path / "pooled", workers=2)
        assert pooled.records == serial.records

    def test_sharding(self, tmp_path, small_build):
        cfg = dataclasses.replace(small_build, shard_size=2)
        manifest = build(cfg, tmp_path)
        assert [r.clean_path.split("/")[0] for r in manifest.records] == ["shard_00000", "shard_00000", "shard_00001"]
        assert shard_dir(2500, 1000) == "shard_00002"

    def test_resume_skips_finished_pairs(self, tmp_path, small_build, monkeypatch):
        first = build(small_build, tmp_path)
        (tmp_path / MANIFEST_NAME).unlink()
        with open(tmp_path / PARTIAL_NAME, "w") as log:
            log.write(json.dumps({"config_hash": first.config_hash}) + "\n")
            log.write(json.dumps({"pair_id": 0, "record": first.records[0].to_dict()}) + "\n")
            log.write('{"pair_id": 1, "rec')

        produced = []
        original = dataset_builder._produce_pair

        def counting(pair_id, *args):
            produced.append(pair_id)
            return original(pair_id, *args)

        monkeypatch.setattr(dataset_builder, "_produce_pair", counting)
        second = build(small_build, tmp_path)
        assert produced == [1, 2]
        assert second.records == first.records
        assert not (tmp_path / PARTIAL_NAME).exists()

    def test_partial_from_other_config_is_ignored(self, tmp_path, small_build, monkeypatch):
        (tmp_path / PARTIAL_NAME).write_text(json.dumps({"config_hash": "0" * 16}) + "\n")
        produced = []
        original = dataset_builder._produce_pair
        monkeypatch.setattr(
            dataset_builder, "_produce_pair", lambda pid, *a: produced.append(pid) or original(pid, *a)
        )
        build(small_build, tmp_path)
        assert produced == [0, 1, 2]

    def test_failed_pair_is_skipped(self, tmp_path, small_build, monkeypatch):
        original = dataset_builder.synthesize_pair

        def flaky(pair_id, cfg, sources=None):
            if pair_id == 1:
                raise ValueError("degenerate scene")
            return original(pair_id, cfg, sources)

        monkeypatch.setattr(dataset_builder, "synthesize_pair", flaky)
        manifest = build(small_build, tmp_path)
        assert [r.pair_id for r in manifest.records] == [0, 2]
        assert manifest.totals["skipped"] == 1
        assert "degenerate scene" in manifest.skipped[0].reason
        assert load_manifest(tmp_path / MANIFEST_NAME).skipped == manifest.skipped

    @pytest.mark.parametrize(
        "error",
        [KeyError("palette"), IndexError("shape pool"), ZeroDivisionError("flat bin"), GeometryError("odd crop")],
    )
    def test_synthesis_errors_are_skipped(self, tmp_path, small_build, monkeypatch, error):
        original = dataset_builder.synthesize_pair

        def flaky(pair_id, cfg, sources=None):
            if pair_id == 0:
                raise error
            return original(pair_id, cfg, sources)

        monkeypatch.setattr(dataset_builder, "synthesize_pair", flaky)
        manifest = build(small_build, tmp_path)
        assert [r.pair_id for r in manifest.records] == [1, 2]
        assert manifest.skipped[0].reason.startswith(type(error).__name__)

    def test_synthesis_io_error_aborts(self, tmp_path, small_build, monkeypatch):
        def unreadable(*args, **kwargs):
            raise OSError("source image vanished")

        monkeypatch.setattr(dataset_builder, "synthesize_pair", unreadable)
        with pytest.raises(DatasetBuildError):
            build(small_build, tmp_path)

    def test_io_failure_points_at_partial(self, tmp_path, small_build, monkeypatch):
        def broken(*args, **kwargs):
            raise OSError("disk full")

        monkeypatch.setattr(dataset_builder, "write_image", broken)
        with pytest.raises(DatasetBuildError) as excinfo:
            build(small_build, tmp_path)
        assert excinfo.value.recovery_path == tmp_path / PARTIAL_NAME
        assert excinfo.value.recovery_path.exists()

    def test_invalid_config(self, tmp_path, small_build):
        with pytest.raises(ConfigurationError):
            build(dataclasses.replace(small_build, profiles=()), tmp_path)

    def test_summary(self, tmp_path, small_build):
        text = summarize_build(build(small_build, tmp_path))
        assert "Pairs Written:         3" in text


class TestVerify:
    def test_clean_build_passes(self, tmp_path, small_build):
        build(small_build, tmp_path)
        report = verify(tmp_path / MANIFEST_NAME, spot_check_fraction=1.0)
        assert report.passed
        assert report.pairs_checked == 3
        assert report.spot_checked == (0, 1, 2)
        assert "PASS" in summarize_verify(report)

    def test_flipped_byte_flags_only_that_pair(self, tmp_path, small_build):
        manifest = build(small_build, tmp_path)
        flip_byte(tmp_path / manifest.records[1].noisy_path)
        report = verify(tmp_path / MANIFEST_NAME)
        assert not report.passed
        assert report.failed_pairs == {1}
        assert "checksum mismatch" in report.failures[0].reason

    def test_identical_pair_is_flagged(self, tmp_path, small_build):
        manifest = build(small_build, tmp_path)
        rec = manifest.records[2]
        (tmp_path / rec.noisy_path).write_bytes((tmp_path / rec.clean_path).read_bytes())
        report = verify(tmp_path / MANIFEST_NAME)
        assert report.failed_pairs == {2}
        assert any("identical" in f.reason for f in report.failures)

    def test_missing_file(self, tmp_path, small_build):
        manifest = build(small_build, tmp_path)
        (tmp_path / manifest.records[0].clean_path).unlink()
        report = verify(tmp_path / MANIFEST_NAME)
        assert report.failed_pairs == {0}
        assert "missing" in report.failures[0].reason

    def test_regeneration_mismatch(self, tmp_path, small_build):
        build(small_build, tmp_path)
        # Rewrite the manifest as if it came from another seed, keeping the hash consistent.
        path = tmp_path / MANIFEST_NAME
        lines = path.read_text().splitlines()
        header = json.loads(lines[0])
        other = BuildConfig.from_dict({**header["config"], "seed": small_build.seed + 1})
        header["config"] = other.to_dict()
        header["config_hash"] = other.config_hash()
        path.write_text("\n".join([json.dumps(header, sort_keys=True), *lines[1:]]) + "\n")
        report = verify(path, spot_check_fraction=1.0)
        assert report.failed_pairs == {0, 1, 2}
        assert all("regeneration" in f.reason for f in report.failures)

    def test_config_hash_mismatch(self, tmp_path, small_build):
        build(small_build, tmp_path)
        path = tmp_path / MANIFEST_NAME
        lines = path.read_text().splitlines()
        header = json.loads(lines[0])
        header["config_hash"] = "f" * 16
        path.write_text("\n".join([json.dumps(header, sort_keys=True), *lines[1:]]) + "\n")
        report = verify(path)
        assert [f.pair_id for f in report.failures] == [None]
        assert "FAIL" in summarize_verify(report)

    def test_require_manifest(self, tmp_path, small_build):
        build(small_build, tmp_path)
        assert require_manifest(tmp_path) == tmp_path / MANIFEST_NAME
        with pytest.raises(ConfigurationError):
            require_manifest(tmp_path / "elsewhere")

    def test_unknown_profile_index_is_reported(self, tmp_path, small_build):
        build(small_build, tmp_path)
        path = tmp_path / MANIFEST_NAME
        lines = path.read_text().splitlines()
        record = json.loads(lines[2])
        record["profile_index"] = 7
        lines[2] = json.dumps(record, sort_keys=True)
        path.write_text("\n".join(lines) + "\n")
        report = verify(path)
        assert report.failed_pairs == {record["pair_id"]}
        assert "unknown profile index 7" in report.failures[0].reason

    def test_relative_folder_source_resolves_from_config(self, tmp_path, small_build):
        configs = tmp_path / "configs"
        (configs / "images").mkdir(parents=True)
        gen = np.random.default_rng(0)
        for name in ("a.png", "b.png"):
            Image.fromarray(gen.integers(0, 256, size=(80, 96, 3), dtype=np.uint8)).save(configs / "images" / name)
        payload = {**small_build.to_dict(), "source": "folder", "source_dir": "images"}
        cfg = BuildConfig.from_dict(payload, base_dir=configs)
        manifest = build(cfg, tmp_path / "out")
        assert manifest.config["source_dir"] == "images"
        report = verify(tmp_path / "out" / MANIFEST_NAME, spot_check_fraction=1.0)
        assert report.passed
