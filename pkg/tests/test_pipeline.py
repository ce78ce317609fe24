import dataclasses

import numpy as np
import pytest
from PIL import Image

from src.core_types import Rng
from src.errors import ConfigurationError
from src.noise_inject import linear_ramp
from src.pipeline import (
    center_crop,
    choose_profile,
    explore_pair,
    noise_level_sweep,
    render_clean,
    summarize_pair,
    synthesize_pair,
)


class TestSynthesizePair:
    def test_pair_is_aligned(self, small_build):
        result = synthesize_pair(0, small_build)
        assert result.clean.same_geometry(result.noisy)
        assert result.clean.width == 64 and result.clean.height == 64
        assert 0.25 <= result.gain_scale <= 4.0
        assert np.isfinite(result.psnr)
        assert 0.0 < result.ssim < 1.0

    def test_pair_is_reproducible(self, small_build):
        a = synthesize_pair(1, small_build)
        b = synthesize_pair(1, small_build)
        assert a.scene_seed == b.scene_seed
        assert np.array_equal(a.clean.data, b.clean.data)
        assert np.array_equal(a.noisy.data, b.noisy.data)

    def test_pairs_differ(self, small_build):
        a = synthesize_pair(0, small_build)
        b = synthesize_pair(1, small_build)
        assert a.scene_seed != b.scene_seed
        assert not np.array_equal(a.clean.data, b.clean.data)

    def test_clean_half_regenerates(self, small_build):
        result = synthesize_pair(2, small_build)
        frame = render_clean(2, small_build)
        assert np.array_equal(frame.clean.data, result.clean.data)
        assert frame.scene.to_json() == result.scene.to_json()

    def test_profile_choice_is_stable(self, small_build, zero_profile):
        cfg = dataclasses.replace(small_build, profiles=(small_build.profiles[0], zero_profile))
        labels = [choose_profile(cfg, i).label for i in range(20)]
        assert labels == [choose_profile(cfg, i).label for i in range(20)]
        assert set(labels) == {"oracle/unity", "clean/none"}

    def test_zero_profile_pair_is_clean(self, small_build, zero_profile):
        cfg = dataclasses.replace(small_build, profiles=(zero_profile,))
        result = synthesize_pair(0, cfg)
        assert np.array_equal(result.noisy.data, result.clean.data)
        assert result.psnr == float("inf")

    def test_folder_source(self, tmp_path, small_build):
        images = tmp_path / "images"
        images.mkdir()
        gen = np.random.default_rng(0)
        for name in ("a.png", "b.png"):
            Image.fromarray(gen.integers(0, 256, size=(80, 96, 3), dtype=np.uint8)).save(images / name)
        cfg = dataclasses.replace(small_build, source="folder", source_dir=str(images))
        result = synthesize_pair(3, cfg)
        assert result.scene is None
        assert result.source == "b.png"
        assert not result.isp.assume_linear_input
        assert result.clean.width == 64


class TestExplore:
    def test_fixed_gain_scale(self, small_generator, oracle_profile):
        result = explore_pair(4, oracle_profile, gain_scale=2.0, generator=small_generator)
        assert result.gain_scale == 2.0

    def test_summary(self, small_generator, oracle_profile):
        text = summarize_pair(explore_pair(4, oracle_profile, generator=small_generator))
        assert "Synthetic Clean/Noisy Pair" in text
        assert "oracle/unity" in text


class TestNoiseLevelSweep:
    def test_quality_falls_with_gain(self, oracle_profile):
        cleans = [linear_ramp(64, 64), linear_ramp(64, 64, ramp=(0.3, 0.9))]
        frame = noise_level_sweep(cleans, oracle_profile, [0.25, 1.0, 4.0], Rng(8))
        assert list(frame.index) == [0.25, 1.0, 4.0]
        assert frame["psnr"].is_monotonic_decreasing
        assert frame["ssim"].is_monotonic_decreasing

    def test_needs_frames(self, oracle_profile):
        with pytest.raises(ConfigurationError):
            noise_level_sweep([], oracle_profile, [1.0], Rng(0))

    @pytest.mark.slow
    def test_built_pairs_degrade_with_gain(self, small_build):
        means = []
        for gain in (0.25, 1.0, 4.0):
            cfg = dataclasses.replace(small_build, count=100, gain_range=(gain, gain))
            results = [synthesize_pair(i, cfg) for i in range(cfg.count)]
            assert all(r.gain_scale == gain for r in results)
            means.append(np.mean([r.psnr for r in results]))
        assert means[0] > means[1] > means[2]


class TestCenterCrop:
    def test_crop_is_centred(self):
        image = np.arange(6 * 8).reshape(6, 8)
        crop = center_crop(image, 4, 2)
        assert crop.tolist() == [[18, 19, 20, 21], [26, 27, 28, 29]]

    def test_too_small(self):
        with pytest.raises(ConfigurationError):
            center_crop(np.zeros((4, 4)), 8, 8)
