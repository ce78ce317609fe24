from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .calibration import NoiseProfile
from .config import BuildConfig, DefaultConfig
from .core_types import BayerImage, Rng, RgbImage
from .errors import ConfigurationError
from .metrics import psnr, ssim
from .noise_inject import InjectionConfig, add_noise, inject_with_gain
from .raw_io import load_display_image
from .renderer import render
from .scene_gen import GeneratorConfig, SceneSpec, sample_scene
from .unprocess import IspParams, IspRandomization, sample_isp_params, unprocess

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass
class CleanFrame:
    """Everything upstream of noise injection for one pair."""

    scene_seed: int
    scene: SceneSpec | None
    rgb: RgbImage
    isp: IspParams
    clean: BayerImage
    source: str | None = None


@dataclass
class PairResult:
    """Container for one synthesized clean/noisy pair and its provenance."""

    pair_id: int
    scene_seed: int
    scene: SceneSpec | None
    rgb: RgbImage
    isp: IspParams
    clean: BayerImage
    noisy: BayerImage
    profile: NoiseProfile
    gain_scale: float
    source: str | None
    elapsed: float

    @property
    def psnr(self) -> float:
        return psnr(self.noisy, self.clean)

    @property
    def ssim(self) -> float:
        return ssim(self.noisy, self.clean)


def list_source_images(directory: Path) -> list[Path]:
    paths = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise ConfigurationError(f"No PNG/JPEG images found in {directory}.")
    return paths


def center_crop(image: np.ndarray, width: int, height: int) -> np.ndarray:
    h, w = image.shape[:2]
    if h < height or w < width:
        raise ConfigurationError(f"Image {w}x{h} is smaller than the target {width}x{height}.")
    top, left = (h - height) // 2, (w - width) // 2
    return image[top : top + height, left : left + width]


def pair_stream(cfg: BuildConfig, pair_id: int) -> Rng:
    return Rng(cfg.seed).derive_stream(f"pair:{pair_id}")


def render_clean(pair_id: int, cfg: BuildConfig, sources: Sequence[Path] | None = None) -> CleanFrame:
    """
    Regenerate the clean half of a pair from the build config alone.

    Procedural builds sample the scene from the pair's "scene" stream and
    render it; folder builds take image ``pair_id mod len(sources)`` and run
    the full unprocess including the tone and gamma inverses.
    """
    pair_rng = pair_stream(cfg, pair_id)
    scene_seed = pair_rng.derive_stream("scene").stream_id
    isp = sample_isp_params(pair_rng.derive_stream("isp"), cfg.isp)

    if cfg.source == "procedural":
        t0 = time.perf_counter()
        scene = sample_scene(Rng(scene_seed), cfg.generator, scene_id=pair_id)
        rgb = render(scene)
        logger.debug("Pair %d: rendered %d objects in %.2fs", pair_id, len(scene.objects), time.perf_counter() - t0)
        source = None
    else:
        sources = sources if sources is not None else list_source_images(cfg.source_path)
        path = sources[pair_id % len(sources)]
        display = center_crop(load_display_image(path), cfg.generator.width, cfg.generator.height)
        rgb = RgbImage(display)
        isp = IspParams(
            ccm=isp.ccm,
            wb_gains=isp.wb_gains,
            assume_linear_input=False,
            invert_color=isp.invert_color,
        )
        scene = None
        source = path.name

    clean = unprocess(rgb, isp, cfg.cfa_pattern)
    return CleanFrame(scene_seed, scene, rgb, isp, clean, source)


def choose_profile(cfg: BuildConfig, pair_id: int) -> NoiseProfile:
    gen = pair_stream(cfg, pair_id).derive_stream("profile").generator()
    return cfg.profiles[int(gen.integers(0, len(cfg.profiles)))]


def synthesize_pair(pair_id: int, cfg: BuildConfig, sources: Sequence[Path] | None = None) -> PairResult:
    """
    Produce one aligned clean/noisy pair end to end.

    Parameters
    ----------
    pair_id : int
        Index of the pair; all randomness comes from streams derived from
        (cfg.seed, "pair:<pair_id>").
    cfg : BuildConfig
        Build configuration.
    sources : sequence of Path, optional
        Pre-listed images for folder builds.

    Returns
    -------
    PairResult
        Scene, intermediate frames and provenance of the pair.
    """
    t0 = time.perf_counter()
    frame = render_clean(pair_id, cfg, sources)
    profile = choose_profile(cfg, pair_id)
    injection = InjectionConfig(profile, cfg.gain_range, cfg.clamp, seed=cfg.seed)
    noisy, gain_scale = inject_with_gain(frame.clean, injection, pair_stream(cfg, pair_id).derive_stream("noise"))
    return PairResult(
        pair_id=pair_id,
        scene_seed=frame.scene_seed,
        scene=frame.scene,
        rgb=frame.rgb,
        isp=frame.isp,
        clean=frame.clean,
        noisy=noisy,
        profile=profile,
        gain_scale=gain_scale,
        source=frame.source,
        elapsed=time.perf_counter() - t0,
    )


def explore_pair(
    seed: int,
    profile: NoiseProfile,
    gain_scale: float = 1.0,
    generator: GeneratorConfig | None = None,
    isp: IspRandomization | None = None,
    pattern: str | None = None,
) -> PairResult:
    """One pair at a fixed gain scale, for interactive inspection."""
    defaults = DefaultConfig()
    cfg = BuildConfig(
        count=1,
        seed=seed,
        generator=generator if generator is not None else GeneratorConfig(),
        profiles=(profile,),
        isp=isp if isp is not None else IspRandomization(),
        pattern=pattern if pattern is not None else defaults.pattern,
        gain_range=(gain_scale, gain_scale),
    )
    cfg.validate()
    return synthesize_pair(0, cfg)


def noise_level_sweep(
    cleans: Sequence[BayerImage],
    profile: NoiseProfile,
    gain_scales: Sequence[float],
    rng: Rng,
    window: str = "gaussian",
) -> pd.DataFrame:
    """
    Mean noisy-vs-clean PSNR and SSIM per gain scale.

    Each clean frame keeps the same noise field at every gain scale (only its
    amplitude changes), so the degradation curve is free of sampling jitter.

    Returns
    -------
    pd.DataFrame
        Indexed by gain_scale with columns psnr, ssim.
    """
    if not cleans:
        raise ConfigurationError("noise_level_sweep needs at least one clean frame.")
    rows = []
    for s in gain_scales:
        scores = []
        for i, clean in enumerate(cleans):
            noisy = add_noise(clean, profile, float(s), rng.derive_stream(f"image:{i}"))
            scores.append((psnr(noisy, clean), ssim(noisy, clean, window=window)))
        arr = np.array(scores)
        rows.append({"gain_scale": float(s), "psnr": arr[:, 0].mean(), "ssim": arr[:, 1].mean()})
    return pd.DataFrame(rows).set_index("gain_scale")


def summarize_pair(result: PairResult) -> str:
    """
    Create a human-readable summary of one synthesized pair.

    Parameters
    ----------
    result : PairResult
        Pair produced by `synthesize_pair`.

    Returns
    -------
    str
        Formatted summary string.
    """
    gains = result.isp.wb_gains
    lines = [
        "=" * 60,
        "Synthetic Clean/Noisy Pair",
        "=" * 60,
        "",
        "Provenance:",
        f"  Pair ID:               {result.pair_id}",
        f"  Scene Seed:            {result.scene_seed:016x}",
    ]
    if result.scene is not None:
        lines += [
            f"  Objects:               {len(result.scene.objects)}",
            f"  Point Lights:          {sum(1 for l in result.scene.lights if l.kind == 'point')}",
        ]
    if result.source is not None:
        lines.append(f"  Source Image:          {result.source}")
    lines += [
        "",
        "Frame:",
        f"  Resolution:            {result.clean.width}x{result.clean.height}",
        f"  CFA Pattern:           {result.clean.pattern.name}",
        "",
        "ISP Inversion:",
        f"  WB Gains (R, G, B):    ({gains[0]:.3f}, {gains[1]:.3f}, {gains[2]:.3f})",
        f"  Linear Input:          {result.isp.assume_linear_input}",
        "",
        "Noise:",
        f"  Profile:               {result.profile.label}{' (synthetic)' if result.profile.synthetic else ''}",
        f"  Gain Scale:            {result.gain_scale:.4f}",
        "",
        "Noisy vs Clean:",
        f"  PSNR:                  {result.psnr:.2f} dB",
        f"  SSIM:                  {result.ssim:.4f}",
        "",
        f"Generated in {result.elapsed:.2f}s",
        "=" * 60,
    ]
    return "\n".join(lines)
