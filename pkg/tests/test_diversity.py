import numpy as np
import pytest
from conftest import checkerboard

from src.core_types import RgbImage, Rng
from src.diversity import color_entropy, edge_ratio, validate_batch
from src.errors import ConfigurationError
from src.renderer import render
from src.scene_gen import GeneratorConfig, sample_scene


def step_image(width: int = 64, height: int = 64, low: float = 0.0, high: float = 1.0) -> RgbImage:
    data = np.full((height, width, 3), low)
    data[:, width // 2 :, :] = high
    return RgbImage(data)


class TestEdgeRatio:
    def test_constant_image(self):
        assert edge_ratio(RgbImage(np.full((32, 32, 3), 0.4))) == 0.0

    @pytest.mark.parametrize("width", [16, 64])
    def test_vertical_step(self, width):
        # the two columns either side of the step respond
        assert edge_ratio(step_image(width)) == pytest.approx(2.0 / width)

    def test_two_pixel_checkerboard(self):
        assert edge_ratio(RgbImage(checkerboard(64, cell=2))) >= 0.9

    def test_brightness_offset_invariant(self):
        assert edge_ratio(step_image(low=0.0, high=0.5)) == edge_ratio(step_image(low=0.3, high=0.8))

    def test_monotone_in_threshold(self):
        gen = np.random.default_rng(4)
        img = RgbImage(gen.uniform(0.0, 1.0, size=(32, 32, 3)))
        ratios = [edge_ratio(img, t) for t in (0.05, 0.1, 0.2, 0.4)]
        assert ratios == sorted(ratios, reverse=True)

    def test_threshold_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            edge_ratio(step_image(), threshold=0.0)


class TestColorEntropy:
    def test_constant_image(self):
        assert color_entropy(RgbImage(np.full((8, 8, 3), 0.2))) == 0.0

    def test_two_colours(self):
        assert color_entropy(step_image(width=8, height=8)) == pytest.approx(1.0)

    def test_every_bin_once(self):
        levels = (np.arange(8) + 0.5) / 8
        r, g, b = np.meshgrid(levels, levels, levels, indexing="ij")
        data = np.stack([r.ravel(), g.ravel(), b.ravel()], axis=1).reshape(16, 32, 3)
        assert color_entropy(RgbImage(data)) == pytest.approx(9.0)


class TestValidateBatch:
    def test_accepts_band(self):
        report = validate_batch([step_image(16, 16)] * 3)
        assert report.accepted
        assert report.mean_edge_ratio == pytest.approx(0.125)
        assert report.std_edge_ratio == pytest.approx(0.0)

    def test_rejects_flat_batch(self):
        report = validate_batch([RgbImage(np.full((16, 16, 3), 0.5))] * 2)
        assert not report.accepted
        assert report.mean_edge_ratio == 0.0

    def test_rejects_busy_batch(self):
        assert not validate_batch([RgbImage(checkerboard(32, cell=2))]).accepted

    def test_report_frame(self):
        report = validate_batch([step_image(16, 16), RgbImage(np.full((16, 16, 3), 0.5))], band=(0.01, 0.5))
        frame = report.to_frame(["step", "flat"])
        assert list(frame.columns) == ["edge_ratio", "color_entropy"]
        assert frame.loc["flat", "edge_ratio"] == 0.0
        assert report.accepted

    def test_empty_batch(self):
        with pytest.raises(ConfigurationError):
            validate_batch([])

    def test_inverted_band(self):
        with pytest.raises(ConfigurationError):
            validate_batch([step_image()], band=(0.5, 0.1))


class TestDefaultScenes:
    @pytest.mark.slow
    def test_default_generator_batch_accepted(self):
        cfg = GeneratorConfig(width=256, height=256)
        root = Rng(0)
        imgs = [render(sample_scene(root.derive_stream(f"scene:{i}"), cfg)) for i in range(200)]
        report = validate_batch(imgs, band=(0.08, 0.45), threshold=0.1)
        assert report.accepted, f"mean edge ratio {report.mean_edge_ratio:.4f}"
