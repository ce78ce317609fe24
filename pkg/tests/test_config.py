import dataclasses
import json
from pathlib import Path

import pytest

from src.calibration import NoiseProfile
from src.config import BuildConfig, DefaultConfig, load_json
from src.errors import ConfigurationError, GeometryError

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def write_config(path: Path, **overrides) -> Path:
    payload = {
        "count": 2,
        "seed": 7,
        "generator": {"width": 64, "height": 64, "samples_per_pixel": 1, "n_objects": [2, 3]},
        "profiles": [NoiseProfile.uniform(0.01, 0.0004, camera="oracle").to_dict()],
        **overrides,
    }
    path.write_text(json.dumps(payload))
    return path


class TestDefaultConfig:
    def test_defaults(self):
        defaults = DefaultConfig()
        assert defaults.calibration_bins == 64
        assert defaults.gain_range == (0.25, 4.0)
        assert defaults.lux_levels == (0.5, 1.0, 2.0, 5.0)
        assert (defaults.width, defaults.height) == (1920, 1080)


class TestBuildConfig:
    def test_shipped_config_loads(self):
        cfg = BuildConfig.load(CONFIG_DIR / "build.json")
        assert cfg.count == 50 and cfg.seed == 42
        assert [p.label for p in cfg.profiles] == ["pixel6/iso1600", "galaxy_s22/iso1600"]
        assert all(p.synthetic for p in cfg.profiles)
        assert cfg.generator.width == 256

    def test_hash_is_stable_and_content_addressed(self, tmp_path):
        cfg = BuildConfig.load(write_config(tmp_path / "a.json"))
        again = BuildConfig.load(write_config(tmp_path / "b.json"))
        assert cfg.config_hash() == again.config_hash()
        assert len(cfg.config_hash()) == 16
        assert dataclasses.replace(cfg, seed=8).config_hash() != cfg.config_hash()

    def test_dict_round_trip_keeps_hash(self, tmp_path):
        cfg = BuildConfig.load(write_config(tmp_path / "build.json"))
        assert BuildConfig.from_dict(cfg.to_dict()).config_hash() == cfg.config_hash()

    def test_profile_paths_are_relative_to_config(self, tmp_path):
        NoiseProfile.uniform(0.02, 0.001, camera="cam").save(tmp_path / "cam.json")
        cfg = BuildConfig.load(write_config(tmp_path / "build.json", profiles=["cam.json"]))
        assert cfg.profiles[0].channels["G"].k == 0.02
        assert "channels" in cfg.to_dict()["profiles"][0]

    def test_missing_profile_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            BuildConfig.load(write_config(tmp_path / "build.json", profiles=["nowhere.json"]))

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigurationError):
            BuildConfig.load(write_config(tmp_path / "build.json", workers=4))

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigurationError):
            load_json(path)

    def test_folder_source_needs_directory(self, tmp_path):
        with pytest.raises(ConfigurationError):
            BuildConfig.load(write_config(tmp_path / "build.json", source="folder"))

    def test_folder_source_dir_resolved(self, tmp_path):
        cfg = BuildConfig.load(write_config(tmp_path / "build.json", source="folder", source_dir="images"))
        assert cfg.source_dir == "images"
        assert cfg.source_path == (tmp_path / "images").resolve()

    def test_folder_config_hash_is_portable(self, tmp_path):
        hashes = []
        for name in ("first", "second"):
            directory = tmp_path / name
            directory.mkdir()
            cfg = BuildConfig.load(write_config(directory / "build.json", source="folder", source_dir="images"))
            hashes.append(cfg.config_hash())
            assert str(tmp_path) not in json.dumps(cfg.to_dict())
        assert hashes[0] == hashes[1]

    @pytest.mark.parametrize(
        "overrides",
        [
            {"count": 0},
            {"profiles": []},
            {"gain_range": [2.0, 1.0]},
            {"black": 100, "white": 50},
            {"shard_size": 0},
            {"source": "camera"},
        ],
    )
    def test_validation(self, tmp_path, overrides):
        with pytest.raises(ConfigurationError):
            BuildConfig.load(write_config(tmp_path / "build.json", **overrides))

    def test_bad_pattern(self, tmp_path):
        with pytest.raises(GeometryError):
            BuildConfig.load(write_config(tmp_path / "build.json", pattern="RGBW"))

    def test_version_checked(self, tmp_path):
        with pytest.raises(ConfigurationError):
            BuildConfig.load(write_config(tmp_path / "build.json", format_version=3))
