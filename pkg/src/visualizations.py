from __future__ import annotations

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from .calibration import CHANNELS, MeanVarianceSamples, NoiseProfile, binned_statistics
from .core_types import BayerImage, RgbImage
from .diversity import DiversityReport
from .raw_io import linear_to_srgb

CHANNEL_COLORS = {"R": "firebrick", "G": "forestgreen", "B": "royalblue"}


def plot_mean_variance_fit(
    samples: dict[str, MeanVarianceSamples],
    profile: NoiseProfile,
    bins: int = 64,
    max_points: int = 4000,
    title: str = "Temporal Mean vs Variance",
    figsize: tuple[int, int] = (12, 6),
) -> plt.Figure:
    """
    Scatter per-site (mean, variance) samples with bin means and fitted lines.

    Parameters
    ----------
    samples : dict
        Channel name -> samples, as returned by `mean_variance_samples`.
    profile : NoiseProfile
        Fitted profile whose lines are drawn.
    bins : int
        Bin count used for the overlaid bin means.
    max_points : int
        Samples drawn per channel (evenly strided) to keep the scatter light.
    title : str
        Plot title.
    figsize : tuple
        Figure size.

    Returns
    -------
    plt.Figure
        Matplotlib figure object.
    """
    fig, ax = plt.subplots(figsize=figsize)
    x_line = np.linspace(0.0, 1.0, 200)

    for c in CHANNELS:
        s = samples[c]
        color = CHANNEL_COLORS[c]
        if len(s):
            step = max(1, len(s) // max_points)
            ax.scatter(s.means[::step], s.variances[::step], s=3, alpha=0.15, color=color)
            stats = binned_statistics(s, bins)
            used = stats.counts > 0
            ax.plot(stats.mean_x[used], stats.mean_var[used], "o", markersize=4, color=color)
        noise = profile.channels[c]
        ax.plot(
            x_line,
            noise.k * x_line + noise.sigma2,
            color=color,
            linewidth=2,
            label=f"{c}: k={noise.k:.4g}, σ²={noise.sigma2:.3g}",
        )

    ax.set_xlabel("Temporal Mean (normalized)", fontsize=12)
    ax.set_ylabel("Temporal Variance", fontsize=12)
    ax.set_title(f"{title} ({profile.label})", fontsize=14, fontweight="bold")
    ax.set_xlim(0.0, 1.0)
    ax.legend()
    ax.grid(True, alpha=0.3)

    return fig


def plot_edge_ratio_distribution(
    report: DiversityReport,
    title: str = "Edge Ratio Distribution",
    figsize: tuple[int, int] = (10, 6),
) -> plt.Figure:
    """
    Histogram and KDE of per-image edge ratios against the acceptance band.
    """
    fig, ax = plt.subplots(figsize=figsize)
    ratios = np.asarray(report.edge_ratios)

    ax.hist(ratios, bins=30, alpha=0.6, color="steelblue", edgecolor="black", density=True)
    if len(ratios) > 1 and np.ptp(ratios) > 0:
        sns.kdeplot(x=ratios, ax=ax, color="darkblue", linewidth=2, label="KDE")

    low, high = report.band
    ax.axvspan(low, high, color="green", alpha=0.1, label=f"Band [{low:.2f}, {high:.2f}]")
    ax.axvline(
        report.mean_edge_ratio,
        color="red",
        linestyle="--",
        linewidth=2,
        label=f"Batch Mean: {report.mean_edge_ratio:.3f}",
    )

    ax.set_xlabel(f"Edge Ratio (threshold {report.threshold:g})", fontsize=12)
    ax.set_ylabel("Density", fontsize=12)
    verdict = "accepted" if report.accepted else "rejected"
    ax.set_title(f"{title} ({len(ratios)} images, {verdict})", fontsize=14, fontweight="bold")
    ax.legend()
    ax.grid(True, alpha=0.3)

    return fig


def plot_gain_sweep(
    sweep: pd.DataFrame,
    title: str = "Noise Level vs Quality",
    figsize: tuple[int, int] = (10, 6),
) -> plt.Figure:
    """PSNR and SSIM of noisy vs clean against gain scale (log x axis)."""
    fig, ax = plt.subplots(figsize=figsize)
    ax.plot(sweep.index, sweep["psnr"], "o-", color="steelblue", linewidth=2, label="PSNR")
    ax.set_xscale("log")
    ax.set_xlabel("Gain Scale", fontsize=12)
    ax.set_ylabel("PSNR (dB)", fontsize=12)

    ax2 = ax.twinx()
    ax2.plot(sweep.index, sweep["ssim"], "s--", color="coral", linewidth=2, label="SSIM")
    ax2.set_ylabel("SSIM", fontsize=12)

    handles = ax.get_legend_handles_labels()[0] + ax2.get_legend_handles_labels()[0]
    ax.legend(handles, [h.get_label() for h in handles])
    ax.set_title(title, fontsize=14, fontweight="bold")
    ax.grid(True, alpha=0.3)

    return fig


def display_image(img: RgbImage | BayerImage) -> np.ndarray:
    """sRGB-encoded float array for imshow; Bayer planes are shown as grey."""
    data = img.data
    if isinstance(img, BayerImage):
        data = np.repeat(data[:, :, None], 3, axis=2)
    return linear_to_srgb(data)


def plot_pair_preview(
    rgb: RgbImage,
    clean: BayerImage,
    noisy: BayerImage,
    figsize: tuple[int, int] = (15, 5),
) -> plt.Figure:
    """Rendered RGB next to the clean and noisy mosaics."""
    fig, axes = plt.subplots(1, 3, figsize=figsize)
    for ax, img, name in zip(axes, (rgb, clean, noisy), ("Rendered RGB", "Clean RAW", "Noisy RAW")):
        ax.imshow(display_image(img), interpolation="nearest")
        ax.set_title(name, fontsize=12)
        ax.axis("off")
    fig.tight_layout()
    return fig
