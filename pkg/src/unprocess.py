from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .core_types import BayerImage, CfaPattern, Rng, RgbImage
from .errors import ConfigurationError, GeometryError, UnprocessError

# XYZ -> camera matrices of four devices; random CCMs are convex blends of these.
XYZ_TO_CAMERA_FIXTURES = np.array(
    [
        [[1.0234, -0.2969, -0.2266], [-0.5625, 1.6328, -0.0469], [-0.0703, 0.2188, 0.6406]],
        [[0.4913, -0.0541, -0.0202], [-0.6130, 1.3513, 0.2906], [-0.1564, 0.2151, 0.7183]],
        [[0.8380, -0.2630, -0.0639], [-0.2887, 1.0725, 0.2496], [-0.0627, 0.1427, 0.5438]],
        [[0.6596, -0.2079, -0.0562], [-0.4782, 1.3016, 0.1933], [-0.0970, 0.1581, 0.5181]],
    ]
)
RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
MAX_CONDITION = 100.0
CCM_ATTEMPTS = 32
WB_GAIN_LIMITS = (0.5, 4.0)


@dataclass(frozen=True)
class IspParams:
    """
    Parameters of the ISP being inverted.

    `ccm` maps camera RAW to linear sRGB with rows summing to 1; `wb_gains`
    are the (R, G, B) white-balance multipliers with G fixed at 1.
    `assume_linear_input` skips the tone and gamma inverses (renders are
    already linear); `invert_color` toggles the CCM and WB inverses.
    """

    ccm: tuple[tuple[float, float, float], ...] = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    wb_gains: tuple[float, float, float] = (1.0, 1.0, 1.0)
    assume_linear_input: bool = True
    invert_color: bool = True

    def __post_init__(self) -> None:
        ccm = np.asarray(self.ccm, dtype=np.float64)
        if ccm.shape != (3, 3):
            raise ConfigurationError(f"CCM must be 3x3, got shape {ccm.shape}.")
        gains = np.asarray(self.wb_gains, dtype=np.float64)
        if gains.shape != (3,):
            raise ConfigurationError("wb_gains must hold three values.")
        if gains[1] != 1.0:
            raise ConfigurationError(f"Green white-balance gain must be 1, got {gains[1]}.")
        low, high = WB_GAIN_LIMITS
        if np.any(gains < low) or np.any(gains > high):
            raise ConfigurationError(f"White-balance gains must lie in [{low}, {high}], got {tuple(gains)}.")

    @property
    def ccm_array(self) -> np.ndarray:
        return np.asarray(self.ccm, dtype=np.float64)

    def check_ccm(self) -> None:
        """Raise UnprocessError unless the CCM is invertible and well conditioned."""
        cond = np.linalg.cond(self.ccm_array)
        if not np.isfinite(cond) or cond >= MAX_CONDITION:
            raise UnprocessError(f"CCM is singular or ill-conditioned (condition number {cond:.3g}).")

    def to_dict(self) -> dict[str, Any]:
        return {
            "ccm": [list(row) for row in self.ccm],
            "wb_gains": list(self.wb_gains),
            "assume_linear_input": self.assume_linear_input,
            "invert_color": self.invert_color,
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> IspParams:
        return cls(
            ccm=tuple(tuple(float(v) for v in row) for row in payload.get("ccm", np.eye(3).tolist())),
            wb_gains=tuple(float(g) for g in payload.get("wb_gains", (1.0, 1.0, 1.0))),
            assume_linear_input=bool(payload.get("assume_linear_input", True)),
            invert_color=bool(payload.get("invert_color", True)),
        )

    @classmethod
    def load(cls, path: Path) -> IspParams:
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class IspRandomization:
    """Per-pair ISP sampling: log-uniform R/B gains and convex CCM blends."""

    wb_range: tuple[float, float] = (0.6, 2.4)
    randomize_ccm: bool = True
    assume_linear_input: bool = True
    invert_color: bool = True
    fixed: IspParams = field(default_factory=IspParams)

    def to_dict(self) -> dict[str, Any]:
        return {
            "wb_range": list(self.wb_range),
            "randomize_ccm": self.randomize_ccm,
            "assume_linear_input": self.assume_linear_input,
            "invert_color": self.invert_color,
            "fixed": self.fixed.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> IspRandomization:
        return cls(
            wb_range=tuple(payload.get("wb_range", (0.6, 2.4))),
            randomize_ccm=bool(payload.get("randomize_ccm", True)),
            assume_linear_input=bool(payload.get("assume_linear_input", True)),
            invert_color=bool(payload.get("invert_color", True)),
            fixed=IspParams.from_dict(payload.get("fixed", {})),
        )


def random_ccm(gen: np.random.Generator) -> np.ndarray:
    """RAW -> sRGB matrix from a random convex blend of the device fixtures, rows summing to 1.

    Blends whose inverse has condition number >= MAX_CONDITION are redrawn.
    """
    for _ in range(CCM_ATTEMPTS):
        weights = gen.uniform(0.0, 1.0, size=len(XYZ_TO_CAMERA_FIXTURES))
        weights = weights / weights.sum()
        xyz_to_cam = np.tensordot(weights, XYZ_TO_CAMERA_FIXTURES, axes=1)
        rgb_to_cam = xyz_to_cam @ RGB_TO_XYZ
        rgb_to_cam = rgb_to_cam / rgb_to_cam.sum(axis=1, keepdims=True)
        try:
            ccm = np.linalg.inv(rgb_to_cam)
        except np.linalg.LinAlgError:
            continue
        if np.linalg.cond(ccm) < MAX_CONDITION:
            return ccm
    raise UnprocessError(f"No CCM with condition number below {MAX_CONDITION} in {CCM_ATTEMPTS} draws.")


def sample_isp_params(rng: Rng, randomization: IspRandomization | None = None) -> IspParams:
    """
    Draw ISP parameters for one pair.

    Red and blue gains are log-uniform over `wb_range`; the CCM is a random
    convex blend of the fixture matrices (or the fixed CCM when disabled).
    """
    randomization = randomization if randomization is not None else IspRandomization()
    gen = rng.generator()
    low, high = randomization.wb_range
    log_gains = gen.uniform(np.log(low), np.log(high), size=2)
    red, blue = (float(g) for g in np.exp(log_gains))
    if randomization.randomize_ccm:
        ccm = random_ccm(gen)
    else:
        ccm = randomization.fixed.ccm_array
    return IspParams(
        ccm=tuple(tuple(float(v) for v in row) for row in ccm),
        wb_gains=(red, 1.0, blue),
        assume_linear_input=randomization.assume_linear_input,
        invert_color=randomization.invert_color,
    )


def invert_tone_map(v: np.ndarray) -> np.ndarray:
    """Inverse of the smoothstep tone curve 3x^2 - 2x^3 on [0, 1]."""
    v = np.clip(v, 0.0, 1.0)
    return 0.5 - np.sin(np.arcsin(1.0 - 2.0 * v) / 3.0)


def srgb_to_linear(v: np.ndarray) -> np.ndarray:
    """sRGB EOTF."""
    v = np.asarray(v, dtype=np.float64)
    return np.where(v <= 0.04045, v / 12.92, np.power((np.maximum(v, 0.0) + 0.055) / 1.055, 2.4))


def invert_ccm(pixels: np.ndarray, ccm: np.ndarray) -> np.ndarray:
    """
    Map sRGB pixels back to camera space by multiplying with ccm^-1.

    Parameters
    ----------
    pixels : np.ndarray
        Array of shape (..., 3).
    ccm : np.ndarray
        RAW -> sRGB 3x3 matrix.
    """
    ccm = np.asarray(ccm, dtype=np.float64)
    try:
        inverse = np.linalg.inv(ccm)
    except np.linalg.LinAlgError as exc:
        raise UnprocessError(f"CCM is singular: {exc}") from exc
    return np.asarray(pixels, dtype=np.float64) @ inverse.T


def invert_wb(pixels: np.ndarray, gains: tuple[float, float, float]) -> np.ndarray:
    return np.asarray(pixels, dtype=np.float64) / np.asarray(gains, dtype=np.float64)


def mosaic(rgb: RgbImage | np.ndarray, pattern: CfaPattern | str = CfaPattern.RGGB) -> BayerImage:
    """Keep, at every pixel, the one channel the CFA pattern samples there."""
    data = rgb.data if isinstance(rgb, RgbImage) else np.asarray(rgb)
    pattern = CfaPattern.parse(pattern)
    h, w = data.shape[:2]
    if h % 2 or w % 2:
        raise GeometryError(f"Mosaicking needs even dimensions, got {w}x{h}.")
    index = pattern.channel_index_map(h, w)
    plane = np.take_along_axis(data, index[..., None].astype(np.intp), axis=2)[..., 0]
    return BayerImage(plane, pattern)


def unprocess_rgb(rgb: np.ndarray, params: IspParams) -> np.ndarray:
    """Inverse ISP stages up to (and including) the final clamp, before mosaicking."""
    x = np.asarray(rgb, dtype=np.float64)
    if not params.assume_linear_input:
        x = invert_tone_map(x)
        x = srgb_to_linear(x)
    if params.invert_color:
        params.check_ccm()
        x = invert_ccm(x, params.ccm_array)
        x = invert_wb(x, params.wb_gains)
    return np.clip(x, 0.0, 1.0)


def unprocess(
    rgb: RgbImage | np.ndarray,
    params: IspParams | None = None,
    pattern: CfaPattern | str = CfaPattern.RGGB,
) -> BayerImage:
    """
    Turn an RGB frame into clean Bayer RAW.

    Stage order: tone inverse, gamma inverse, CCM inverse, WB inverse, clamp,
    mosaic. The first two are skipped when `params.assume_linear_input`.

    Parameters
    ----------
    rgb : RgbImage or np.ndarray
        Input frame of shape (H, W, 3).
    params : IspParams, optional
        ISP to invert; identity by default.
    pattern : CfaPattern or str
        CFA layout of the output.

    Returns
    -------
    BayerImage
        Clean mosaic in [0, 1].
    """
    params = params if params is not None else IspParams()
    data = rgb.data if isinstance(rgb, RgbImage) else rgb
    return mosaic(unprocess_rgb(data, params), pattern)
