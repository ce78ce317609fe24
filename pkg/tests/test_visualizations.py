import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pytest  # noqa: E402

from src.calibration import mean_variance_samples  # noqa: E402
from src.core_types import Rng, RgbImage  # noqa: E402
from src.diversity import validate_batch  # noqa: E402
from src.noise_inject import add_noise, linear_ramp, synthesize_burst  # noqa: E402
from src.pipeline import noise_level_sweep  # noqa: E402
from src.unprocess import mosaic  # noqa: E402
from src.visualizations import (  # noqa: E402
    display_image,
    plot_edge_ratio_distribution,
    plot_gain_sweep,
    plot_mean_variance_fit,
    plot_pair_preview,
)


@pytest.fixture(autouse=True)
def close_figures():
    yield
    plt.close("all")


def test_mean_variance_figure(oracle_profile):
    burst = synthesize_burst(oracle_profile, frames=4, width=32, height=32, rng=Rng(0))
    fig = plot_mean_variance_fit(mean_variance_samples(burst), oracle_profile, bins=16)
    ax = fig.axes[0]
    assert "oracle/unity" in ax.get_title()
    assert len(ax.get_legend().get_texts()) == 3


@pytest.mark.parametrize("count", [1, 5])
def test_edge_ratio_figure(count):
    gen = np.random.default_rng(count)
    imgs = [RgbImage(gen.uniform(0.0, 1.0, size=(16, 16, 3))) for _ in range(count)]
    fig = plot_edge_ratio_distribution(validate_batch(imgs))
    assert f"{count} images" in fig.axes[0].get_title()


def test_gain_sweep_figure(oracle_profile):
    sweep = noise_level_sweep([linear_ramp(16, 16)], oracle_profile, [0.5, 1.0, 2.0], Rng(1))
    fig = plot_gain_sweep(sweep)
    assert len(fig.axes) == 2
    assert fig.axes[0].get_xscale() == "log"


def test_pair_preview(oracle_profile):
    rgb = RgbImage(np.full((8, 8, 3), 0.5))
    clean = mosaic(rgb)
    noisy = add_noise(clean, oracle_profile, 1.0, Rng(2))
    fig = plot_pair_preview(rgb, clean, noisy)
    assert [ax.get_title() for ax in fig.axes] == ["Rendered RGB", "Clean RAW", "Noisy RAW"]


def test_display_image_is_srgb():
    out = display_image(mosaic(RgbImage(np.full((2, 2, 3), 0.5))))
    assert out.shape == (2, 2, 3)
    assert out[0, 0, 0] == pytest.approx(0.7354, abs=1e-3)
