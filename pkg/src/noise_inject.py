from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .calibration import BurstStack, NoiseProfile
from .core_types import BayerImage, CfaPattern, Rng
from .errors import ConfigurationError, NoiseModelError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InjectionConfig:
    """
    Noise synthesis settings for the noisy half of a pair.

    The gain scale s multiplies both k and sigma2 of the profile; one s is
    drawn per image, log-uniformly over `gain_range`.
    """

    profile: NoiseProfile
    gain_range: tuple[float, float] = (0.25, 4.0)
    clamp: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        low, high = self.gain_range
        if not 0.0 < low <= high:
            raise ConfigurationError(f"Gain range must satisfy 0 < low <= high, got {self.gain_range}.")


def sample_gain_scale(
    rng: Rng, gain_range: tuple[float, float] = (0.25, 4.0), size: int | None = None
) -> float | np.ndarray:
    """
    Log-uniform noise-level multiplier in [low, high].

    Parameters
    ----------
    rng : Rng
        Stream the draw comes from.
    gain_range : (low, high)
        Bounds, 0 < low <= high.
    size : int, optional
        Number of draws; a single float when omitted.
    """
    low, high = gain_range
    if not 0.0 < low <= high:
        raise ConfigurationError(f"Gain range must satisfy 0 < low <= high, got {gain_range}.")
    if low == high:
        return float(low) if size is None else np.full(size, float(low))
    draws = np.exp(rng.generator().uniform(np.log(low), np.log(high), size=size))
    # exp(log(high)) can land an ulp outside the range
    draws = np.clip(draws, low, high)
    return float(draws) if size is None else draws


def row_noise(rng: Rng, height: int, width: int) -> np.ndarray:
    """Standard normal field where row r comes from its own sub-stream "row:r"."""
    field = np.empty((height, width))
    for r in range(height):
        field[r] = rng.derive_stream(f"row:{r}").generator().standard_normal(width)
    return field


def add_noise(
    clean: BayerImage,
    profile: NoiseProfile,
    gain_scale: float,
    rng: Rng,
    clamp: bool = True,
) -> BayerImage:
    """
    Add Normal(0, s * (k_c * x + sigma2_c)) noise to every pixel of a clean mosaic.

    Raises
    ------
    NoiseModelError
        If the modelled variance is negative anywhere.
    """
    if profile.is_zero_noise:
        return BayerImage(clean.data.copy(), clean.pattern)

    x = clean.data.astype(np.float64)
    k, sigma2 = profile.coefficients()
    index = clean.channel_index_map()
    variance = gain_scale * (k[index] * x + sigma2[index])
    if np.any(variance < 0.0):
        raise NoiseModelError(
            f"Modelled variance is negative (min {variance.min():.3g}) for profile {profile.label}."
        )
    noisy = x + row_noise(rng, clean.height, clean.width) * np.sqrt(variance)
    if clamp:
        noisy = np.clip(noisy, 0.0, 1.0)
    return BayerImage(noisy, clean.pattern)


def inject_with_gain(clean: BayerImage, cfg: InjectionConfig, rng: Rng) -> tuple[BayerImage, float]:
    """Like `inject`, also returning the gain scale that was drawn."""
    gain_scale = sample_gain_scale(rng.derive_stream("gain-scale"), cfg.gain_range)
    noisy = add_noise(clean, cfg.profile, gain_scale, rng.derive_stream("pixels"), cfg.clamp)
    logger.debug("Injected %s noise at gain scale %.4f", cfg.profile.label, gain_scale)
    return noisy, gain_scale


def inject(clean: BayerImage, cfg: InjectionConfig, rng: Rng) -> BayerImage:
    """
    Synthesize the noisy counterpart of a clean Bayer frame.

    Parameters
    ----------
    clean : BayerImage
        Clean mosaic in [0, 1].
    cfg : InjectionConfig
        Profile, gain-scale range and clamp policy.
    rng : Rng
        Stream owned by this image; the gain scale and the per-row noise
        fields come from named child streams, so the result is bit-identical
        for a fixed stream.

    Returns
    -------
    BayerImage
        Noisy mosaic with the pattern of `clean`.
    """
    return inject_with_gain(clean, cfg, rng)[0]


def linear_ramp(
    width: int, height: int, pattern: CfaPattern | str = CfaPattern.RGGB, ramp: tuple[float, float] = (0.15, 0.6)
) -> BayerImage:
    """Clean frame whose intensity rises linearly from left to right."""
    row = np.linspace(ramp[0], ramp[1], width)
    return BayerImage(np.tile(row, (height, 1)), CfaPattern.parse(pattern))


class _SyntheticFrames(Sequence[BayerImage]):
    """Burst frames regenerated on access from their per-frame streams."""

    def __init__(self, clean: BayerImage, profile: NoiseProfile, rng: Rng, count: int, gain_scale: float) -> None:
        self._clean = clean
        self._profile = profile
        self._rng = rng
        self._count = count
        self._gain_scale = gain_scale

    def __len__(self) -> int:
        return self._count

    def __getitem__(self, index):  # type: ignore[override]
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(self._count))]
        if not -self._count <= index < self._count:
            raise IndexError(index)
        index %= self._count
        return add_noise(self._clean, self._profile, self._gain_scale, self._rng.derive_stream(f"frame:{index}"))

    def __iter__(self) -> Iterator[BayerImage]:
        for i in range(self._count):
            yield self[i]


def synthesize_burst(
    profile: NoiseProfile,
    frames: int,
    width: int = 256,
    height: int = 256,
    pattern: CfaPattern | str = CfaPattern.RGGB,
    rng: Rng | None = None,
    ramp: tuple[float, float] = (0.15, 0.6),
    gain_scale: float = 1.0,
) -> BurstStack:
    """
    Oracle burst stack: a static luminance ramp with the profile's noise per frame.

    The default ramp keeps every site several standard deviations away from
    0 and 1, so clamping does not bias the temporal variance.
    """
    if frames < 1:
        raise ConfigurationError(f"Burst needs at least one frame, got {frames}.")
    rng = rng if rng is not None else Rng(0)
    clean = linear_ramp(width, height, pattern, ramp)
    return BurstStack(
        _SyntheticFrames(clean, profile, rng, frames, gain_scale),
        camera=profile.camera,
        gain=profile.gain,
    )
