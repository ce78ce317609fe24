import json

import numpy as np
import pandas as pd
import pytest

from src.core_types import BayerImage, CfaPattern, RgbImage
from src.errors import ConfigurationError, GeometryError
from src.metrics import (
    EvalPair,
    evaluate_set,
    gaussian_window,
    load_pairs_jsonl,
    psnr,
    ssim,
)
from src.raw_io import write_image


def naive_ssim(x: np.ndarray, y: np.ndarray, c1: float = 1e-4, c2: float = 9e-4) -> float:
    """Per-window SSIM with explicit Gaussian-weighted statistics."""
    w = gaussian_window()
    n = w.shape[0]
    scores = []
    for i in range(x.shape[0] - n + 1):
        for j in range(x.shape[1] - n + 1):
            px, py = x[i : i + n, j : j + n], y[i : i + n, j : j + n]
            mx, my = np.sum(w * px), np.sum(w * py)
            vx = np.sum(w * (px - mx) ** 2)
            vy = np.sum(w * (py - my) ** 2)
            cov = np.sum(w * (px - mx) * (py - my))
            scores.append(((2 * mx * my + c1) * (2 * cov + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2)))
    return float(np.mean(scores))


@pytest.fixture
def noisy_pair():
    gen = np.random.default_rng(0)
    target = gen.uniform(0.2, 0.8, size=(20, 24))
    output = np.clip(target + gen.normal(0.0, 0.05, size=target.shape), 0.0, 1.0)
    return output, target


class TestPsnr:
    def test_identical_is_infinite(self):
        x = np.full((4, 4), 0.3)
        assert psnr(x, x) == float("inf")

    def test_uniform_offset(self):
        x = np.full((4, 4), 0.3)
        assert psnr(x + 0.1, x) == pytest.approx(20.0)

    def test_half_scale_error(self):
        assert psnr(np.zeros((2, 2)), np.full((2, 2), 0.5)) == pytest.approx(6.0206, abs=1e-4)

    def test_peak(self):
        x = np.zeros((2, 2))
        assert psnr(x, x + 25.5, peak=255.0) == pytest.approx(20.0)

    def test_shape_mismatch(self):
        with pytest.raises(GeometryError):
            psnr(np.zeros((2, 2)), np.zeros((2, 4)))

    def test_pattern_mismatch(self):
        a = BayerImage(np.zeros((2, 2)), CfaPattern.RGGB)
        b = BayerImage(np.zeros((2, 2)), CfaPattern.BGGR)
        with pytest.raises(GeometryError):
            psnr(a, b)


class TestSsim:
    def test_identical_is_one(self, noisy_pair):
        _, target = noisy_pair
        assert ssim(target, target) == pytest.approx(1.0)
        assert ssim(target, target, window="block") == pytest.approx(1.0)

    def test_matches_per_window_reference(self, noisy_pair):
        output, target = noisy_pair
        assert ssim(output, target) == pytest.approx(naive_ssim(output, target), abs=1e-6)

    def test_matches_reference_on_random_pairs(self):
        gen = np.random.default_rng(7)
        for _ in range(20):
            target = gen.uniform(0.0, 1.0, size=(64, 64))
            sigma = gen.uniform(0.01, 0.2)
            output = np.clip(target + gen.normal(0.0, sigma, size=target.shape), 0.0, 1.0)
            assert ssim(output, target) == pytest.approx(naive_ssim(output, target), abs=1e-6)

    def test_constant_images_compare_luminance(self):
        a, b = np.full((16, 16), 0.5), np.full((16, 16), 0.25)
        expected = (2 * 0.5 * 0.25 + 1e-4) / (0.5**2 + 0.25**2 + 1e-4)
        assert ssim(a, b) == pytest.approx(expected, rel=1e-9)
        assert ssim(a, b, window="block") == pytest.approx(expected, rel=1e-9)

    def test_block_window(self):
        gen = np.random.default_rng(1)
        x, y = gen.uniform(size=(16, 16)), gen.uniform(size=(16, 16))
        scores = []
        for i in (0, 8):
            for j in (0, 8):
                bx, by = x[i : i + 8, j : j + 8], y[i : i + 8, j : j + 8]
                cov = np.mean((bx - bx.mean()) * (by - by.mean()))
                scores.append(
                    ((2 * bx.mean() * by.mean() + 1e-4) * (2 * cov + 9e-4))
                    / ((bx.mean() ** 2 + by.mean() ** 2 + 1e-4) * (bx.var() + by.var() + 9e-4))
                )
        assert ssim(x, y, window="block") == pytest.approx(np.mean(scores), abs=1e-12)

    def test_rgb_averages_channels(self, noisy_pair):
        output, target = noisy_pair
        rgb_out = np.stack([output, target, target], axis=2)
        rgb_target = np.stack([target, target, target], axis=2)
        expected = (ssim(output, target) + 2.0) / 3.0
        assert ssim(RgbImage(rgb_out), RgbImage(rgb_target)) == pytest.approx(expected, abs=1e-6)

    def test_more_noise_scores_lower(self, noisy_pair):
        output, target = noisy_pair
        lighter = target + np.random.default_rng(5).normal(0.0, 0.01, size=target.shape)
        assert ssim(output, target) < ssim(lighter, target) < 1.0

    @pytest.mark.parametrize("window,size", [("gaussian", 10), ("block", 6)])
    def test_image_smaller_than_window(self, window, size):
        x = np.zeros((size, size))
        with pytest.raises(GeometryError):
            ssim(x, x, window=window)

    def test_unknown_window(self, noisy_pair):
        with pytest.raises(ConfigurationError):
            ssim(*noisy_pair, window="box")


def scored_pairs():
    gen = np.random.default_rng(2)
    pairs = []
    for i, (label, lux) in enumerate([("office", 0.5), ("office", 1.0), ("street", 0.5), ("street", 1.0)]):
        target = gen.uniform(0.2, 0.8, size=(16, 16))
        output = target + gen.normal(0.0, 0.02 * (i + 1), size=target.shape)
        pairs.append(EvalPair(output, target, label, lux, pair_id=f"p{i}"))
    return pairs


class TestEvaluateSet:
    def test_groups_by_lux(self):
        table = evaluate_set(scored_pairs())
        by_lux = table.by_lux
        assert list(by_lux.index) == [0.5, 1.0]
        assert by_lux["count"].tolist() == [2, 2]
        frame = table.to_frame()
        assert by_lux.loc[0.5, "psnr"] == pytest.approx(frame[frame.lux == 0.5].psnr.mean())

    def test_label_table_starts_with_all(self):
        by_label = evaluate_set(scored_pairs()).by_label
        assert list(by_label.index) == ["all", "office", "street"]
        assert list(by_label.columns) == [(0.5, "psnr"), (0.5, "ssim"), (1.0, "psnr"), (1.0, "ssim")]
        assert by_label.loc["all", (0.5, "psnr")] == pytest.approx(
            by_label.loc[["office", "street"], (0.5, "psnr")].mean()
        )

    def test_csv_layout(self, tmp_path):
        path = tmp_path / "scores.csv"
        evaluate_set(scored_pairs()).to_csv(path)
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["label", "0.5lux_PSNR", "0.5lux_SSIM", "1lux_PSNR", "1lux_SSIM"]
        assert frame["label"].tolist() == ["all", "office", "street"]

    def test_unknown_lux(self):
        pair = scored_pairs()[0]
        with pytest.raises(ConfigurationError):
            evaluate_set([EvalPair(pair.output, pair.target, "office", 3.0)])

    def test_empty(self):
        with pytest.raises(ConfigurationError):
            evaluate_set([])

    def test_pairs_from_jsonl(self, tmp_path):
        gen = np.random.default_rng(3)
        target = BayerImage(gen.uniform(0.2, 0.8, size=(16, 16)))
        output = BayerImage(np.clip(target.data + 0.01, 0.0, 1.0))
        write_image(tmp_path / "target.raw", target)
        write_image(tmp_path / "output.raw", output)
        entry = {"output": "output.raw", "target": "target.raw", "label": "lab", "lux": 2}
        (tmp_path / "pairs.jsonl").write_text(json.dumps(entry) + "\n")
        pairs = load_pairs_jsonl(tmp_path / "pairs.jsonl")
        table = evaluate_set(pairs)
        assert table.records[0].pair_id == 0
        assert table.records[0].psnr == pytest.approx(40.0, abs=0.1)

    def test_malformed_jsonl(self, tmp_path):
        (tmp_path / "pairs.jsonl").write_text('{"label": "office"}\n')
        with pytest.raises(ConfigurationError):
            load_pairs_jsonl(tmp_path / "pairs.jsonl")
