from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np
from scipy.stats import linregress

from .core_types import BayerImage, Channel
from .errors import ConfigurationError, GeometryError, InsufficientBinsError
from .raw_io import read_image

logger = logging.getLogger(__name__)

PROFILE_FORMAT_VERSION = 1
CHANNELS = ("R", "G", "B")


@dataclass(frozen=True)
class ChannelNoise:
    """Variance line Var(x) = k * x + sigma2 for one colour channel, x in [0, 1]."""

    k: float
    sigma2: float

    def __post_init__(self) -> None:
        if self.k < 0 or self.sigma2 < 0:
            raise ConfigurationError(f"Noise parameters must be >= 0, got k={self.k}, sigma2={self.sigma2}.")


@dataclass(frozen=True)
class FitDiagnostics:
    r_squared: float
    sample_count: int
    residual_rms: float
    bins_used: int


@dataclass(frozen=True)
class NoiseProfile:
    """Signal-dependent noise parameters of one (camera, gain) pair."""

    camera: str
    gain: str
    channels: dict[str, ChannelNoise]
    diagnostics: dict[str, FitDiagnostics] = field(default_factory=dict)
    synthetic: bool = False

    def __post_init__(self) -> None:
        missing = set(CHANNELS) - set(self.channels)
        if missing:
            raise ConfigurationError(f"Noise profile lacks channels {sorted(missing)}.")

    @property
    def label(self) -> str:
        return f"{self.camera}/{self.gain}"

    @property
    def is_zero_noise(self) -> bool:
        return all(c.k == 0.0 and c.sigma2 == 0.0 for c in self.channels.values())

    def coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """(k, sigma2) arrays indexed by channel index 0=R, 1=G, 2=B."""
        k = np.array([self.channels[c].k for c in CHANNELS])
        s = np.array([self.channels[c].sigma2 for c in CHANNELS])
        return k, s

    def variance(self, channel: Channel | str, x: np.ndarray) -> np.ndarray:
        noise = self.channels[Channel(channel).value]
        return noise.k * np.asarray(x, dtype=np.float64) + noise.sigma2

    def to_dict(self) -> dict[str, Any]:
        return {
            "camera": self.camera,
            "gain": self.gain,
            "channels": {c: {"k": n.k, "sigma2": n.sigma2} for c, n in sorted(self.channels.items())},
            "diagnostics": {
                c: {
                    "r_squared": d.r_squared,
                    "sample_count": d.sample_count,
                    "residual_rms": d.residual_rms,
                    "bins_used": d.bins_used,
                }
                for c, d in sorted(self.diagnostics.items())
            },
            "normalization": "0-1",
            "synthetic": self.synthetic,
            "format_version": PROFILE_FORMAT_VERSION,
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> NoiseProfile:
        version = payload.get("format_version", PROFILE_FORMAT_VERSION)
        if version != PROFILE_FORMAT_VERSION:
            raise ConfigurationError(f"Unsupported noise profile format version {version}.")
        if payload.get("normalization", "0-1") != "0-1":
            raise ConfigurationError("Only 0-1 normalized noise profiles are supported.")
        channels = {
            c: ChannelNoise(float(v["k"]), float(v["sigma2"])) for c, v in payload["channels"].items()
        }
        diagnostics = {
            c: FitDiagnostics(
                r_squared=float(v["r_squared"]),
                sample_count=int(v["sample_count"]),
                residual_rms=float(v["residual_rms"]),
                bins_used=int(v["bins_used"]),
            )
            for c, v in payload.get("diagnostics", {}).items()
        }
        return cls(
            camera=payload["camera"],
            gain=payload["gain"],
            channels=channels,
            diagnostics=diagnostics,
            synthetic=bool(payload.get("synthetic", False)),
        )

    def save(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: Path) -> NoiseProfile:
        return cls.from_dict(json.loads(Path(path).read_text()))

    @classmethod
    def uniform(cls, k: float, sigma2: float, camera: str = "synthetic", gain: str = "unity") -> NoiseProfile:
        """Same (k, sigma2) on every channel."""
        noise = ChannelNoise(k, sigma2)
        return cls(camera, gain, {c: noise for c in CHANNELS}, synthetic=True)


class _FrameFiles(Sequence[BayerImage]):
    """Frames read from disk on access, so long bursts never sit in memory at once."""

    def __init__(self, paths: list[Path]) -> None:
        self._paths = paths

    def __len__(self) -> int:
        return len(self._paths)

    def __getitem__(self, index):  # type: ignore[override]
        if isinstance(index, slice):
            return _FrameFiles(self._paths[index])
        frame = read_image(self._paths[index])
        if not isinstance(frame, BayerImage):
            raise GeometryError(f"{self._paths[index]} is not a Bayer frame.")
        return frame

    def __iter__(self) -> Iterator[BayerImage]:
        for i in range(len(self)):
            yield self[i]


@dataclass(frozen=True)
class BurstStack:
    """Frames of a static scene captured at one (camera, gain) setting."""

    frames: Sequence[BayerImage]
    camera: str = "unknown"
    gain: str = "unknown"

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    @classmethod
    def from_directory(cls, directory: Path, camera: str = "unknown", gain: str = "unknown") -> BurstStack:
        paths = sorted(Path(directory).glob("*.raw"))
        if not paths:
            raise ConfigurationError(f"No .raw frames found in {directory}.")
        return cls(_FrameFiles(paths), camera, gain)


@dataclass(frozen=True)
class MeanVarianceSamples:
    means: np.ndarray
    variances: np.ndarray

    def __len__(self) -> int:
        return int(self.means.size)


@dataclass(frozen=True)
class BinnedStatistics:
    centers: np.ndarray
    mean_x: np.ndarray
    mean_var: np.ndarray
    counts: np.ndarray


def mean_variance_samples(
    stack: BurstStack, clip_margin: float = 0.02
) -> dict[str, MeanVarianceSamples]:
    """
    Temporal mean and unbiased variance of every pixel site, grouped by channel.

    Parameters
    ----------
    stack : BurstStack
        At least two frames of identical geometry and pattern.
    clip_margin : float
        Sites whose mean lies within this fraction of the black or white
        level are dropped (clipping biases their variance).

    Returns
    -------
    dict
        Channel name ("R", "G", "B") -> samples; Gr and Gb are pooled in "G".
    """
    if stack.frame_count < 2:
        raise ConfigurationError(f"Need at least 2 frames, got {stack.frame_count}.")

    reference: BayerImage | None = None
    mean = m2 = None
    count = 0
    # Welford accumulation keeps one frame in memory at a time.
    for frame in stack.frames:
        if reference is None:
            reference = frame
            mean = np.zeros(frame.data.shape)
            m2 = np.zeros(frame.data.shape)
        elif not frame.same_geometry(reference):
            raise GeometryError(
                f"Frame {count} is {frame.width}x{frame.height} {frame.pattern.name}, expected "
                f"{reference.width}x{reference.height} {reference.pattern.name}."
            )
        count += 1
        x = frame.data.astype(np.float64)
        delta = x - mean
        mean += delta / count
        m2 += delta * (x - mean)

    variance = m2 / (count - 1)
    keep = (mean >= clip_margin) & (mean <= 1.0 - clip_margin)
    index = reference.channel_index_map()
    samples = {}
    for channel in CHANNELS:
        mask = keep & (index == Channel(channel).index)
        samples[channel] = MeanVarianceSamples(mean[mask], variance[mask])
    logger.debug(
        "Burst of %d frames: %d of %d sites kept", count, int(keep.sum()), keep.size
    )
    return samples


def binned_statistics(samples: MeanVarianceSamples, bins: int = 64) -> BinnedStatistics:
    """Per-bin mean intensity and mean variance over equal-width bins of [0, 1]."""
    idx = np.clip((samples.means * bins).astype(np.int64), 0, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    sum_x = np.bincount(idx, weights=samples.means, minlength=bins)
    sum_v = np.bincount(idx, weights=samples.variances, minlength=bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_x = np.where(counts > 0, sum_x / counts, np.nan)
        mean_var = np.where(counts > 0, sum_v / counts, np.nan)
    centers = (np.arange(bins) + 0.5) / bins
    return BinnedStatistics(centers, mean_x, mean_var, counts)


def _fit_channel(
    channel: str, stats: BinnedStatistics, sample_count: int, min_samples: int
) -> tuple[ChannelNoise, FitDiagnostics]:
    use = stats.counts >= min_samples
    x = stats.mean_x[use]
    y = stats.mean_var[use]
    fit = linregress(x, y)
    k, sigma2 = float(fit.slope), float(fit.intercept)
    residual = y - (k * x + sigma2)
    if k < 0.0:
        logger.warning("Channel %s: negative slope %.3g clamped to 0", channel, k)
        k = 0.0
    if sigma2 < 0.0:
        logger.warning("Channel %s: negative intercept %.3g clamped to 0", channel, sigma2)
        sigma2 = 0.0
    diagnostics = FitDiagnostics(
        r_squared=float(fit.rvalue**2),
        sample_count=sample_count,
        residual_rms=float(np.sqrt(np.mean(residual**2))),
        bins_used=int(use.sum()),
    )
    return ChannelNoise(k, sigma2), diagnostics


def fit_noise_profile(
    samples: dict[str, MeanVarianceSamples],
    camera: str = "unknown",
    gain: str = "unknown",
    bins: int = 64,
    min_samples: int = 100,
    min_bins: int = 10,
) -> NoiseProfile:
    """
    Fit Var = k * x + sigma2 per channel by least squares over bin aggregates.

    Samples are bucketed into `bins` equal-width intensity bins; bins with at
    least `min_samples` points contribute their (mean x, mean variance) to an
    ordinary least-squares line. Bin means (not nominal centres) are the
    regressors so partially covered bins at the ends of a ramp stay unbiased.

    Raises
    ------
    InsufficientBinsError
        If any channel has fewer than `min_bins` qualifying bins; carries the
        per-channel occupancy histogram.
    """
    binned = {c: binned_statistics(samples[c], bins) for c in CHANNELS}
    occupancy = {c: binned[c].counts.tolist() for c in CHANNELS}
    short = [c for c in CHANNELS if int((binned[c].counts >= min_samples).sum()) < min_bins]
    if short:
        raise InsufficientBinsError(
            f"Channels {short} have fewer than {min_bins} bins with >= {min_samples} samples.",
            occupancy,
        )

    channels = {}
    diagnostics = {}
    for c in CHANNELS:
        channels[c], diagnostics[c] = _fit_channel(c, binned[c], len(samples[c]), min_samples)
        logger.info(
            "Channel %s: k=%.6g sigma2=%.6g R2=%.4f",
            c,
            channels[c].k,
            channels[c].sigma2,
            diagnostics[c].r_squared,
        )
    return NoiseProfile(camera, gain, channels, diagnostics)


def calibrate(stack: BurstStack, bins: int = 64, min_samples: int = 100, min_bins: int = 10) -> NoiseProfile:
    """Burst stack -> fitted NoiseProfile labelled with the stack's camera and gain."""
    samples = mean_variance_samples(stack)
    return fit_noise_profile(samples, stack.camera, stack.gain, bins, min_samples, min_bins)
