from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import pandas as pd
from scipy.signal import convolve2d

from .core_types import BayerImage, RgbImage
from .errors import ConfigurationError, GeometryError
from .raw_io import load_display_image, read_image

logger = logging.getLogger(__name__)

LUX_LEVELS = (0.5, 1.0, 2.0, 5.0)
GAUSSIAN_WINDOW = 11
GAUSSIAN_SIGMA = 1.5
BLOCK_WINDOW = 8
SSIM_WINDOWS = ("gaussian", "block")

ImageLike = Union[BayerImage, RgbImage, np.ndarray]


def _as_array(img: ImageLike) -> np.ndarray:
    data = img.data if isinstance(img, (BayerImage, RgbImage)) else img
    return np.asarray(data, dtype=np.float64)


def _pair(a: ImageLike, b: ImageLike) -> tuple[np.ndarray, np.ndarray]:
    x, y = _as_array(a), _as_array(b)
    if x.shape != y.shape:
        raise GeometryError(f"Image shapes differ: {x.shape} vs {y.shape}.")
    if isinstance(a, BayerImage) and isinstance(b, BayerImage) and a.pattern is not b.pattern:
        raise GeometryError(f"CFA patterns differ: {a.pattern.name} vs {b.pattern.name}.")
    return x, y


def psnr(a: ImageLike, b: ImageLike, peak: float = 1.0) -> float:
    """
    Peak signal-to-noise ratio, 10 * log10(peak^2 / MSE), in dB.

    Identical images give ``inf``.
    """
    if peak <= 0:
        raise ConfigurationError(f"peak must be > 0, got {peak}.")
    x, y = _pair(a, b)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak**2 / mse))


def gaussian_window(size: int = GAUSSIAN_WINDOW, sigma: float = GAUSSIAN_SIGMA) -> np.ndarray:
    """Normalized 2-D Gaussian kernel of shape (size, size)."""
    half = (size - 1) / 2.0
    y, x = np.ogrid[-half : half + 1, -half : half + 1]
    h = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
    return h / h.sum()


def _ssim_terms(
    mu1: np.ndarray,
    mu2: np.ndarray,
    var1: np.ndarray,
    var2: np.ndarray,
    cov: np.ndarray,
    c1: float,
    c2: float,
) -> np.ndarray:
    return ((2.0 * mu1 * mu2 + c1) * (2.0 * cov + c2)) / ((mu1**2 + mu2**2 + c1) * (var1 + var2 + c2))


def _ssim_gaussian_plane(x: np.ndarray, y: np.ndarray, c1: float, c2: float) -> np.ndarray:
    window = gaussian_window()

    def filt(v: np.ndarray) -> np.ndarray:
        # symmetric kernel, so convolution equals correlation
        return convolve2d(v, window, mode="valid")

    mu1, mu2 = filt(x), filt(y)
    var1 = filt(x * x) - mu1**2
    var2 = filt(y * y) - mu2**2
    cov = filt(x * y) - mu1 * mu2
    return _ssim_terms(mu1, mu2, var1, var2, cov, c1, c2)


def _ssim_block_plane(x: np.ndarray, y: np.ndarray, c1: float, c2: float) -> np.ndarray:
    n = BLOCK_WINDOW
    h, w = (x.shape[0] // n) * n, (x.shape[1] // n) * n

    def blocks(v: np.ndarray) -> np.ndarray:
        return v[:h, :w].reshape(h // n, n, w // n, n).swapaxes(1, 2).reshape(h // n, w // n, n * n)

    bx, by = blocks(x), blocks(y)
    mu1, mu2 = bx.mean(axis=-1), by.mean(axis=-1)
    var1, var2 = bx.var(axis=-1), by.var(axis=-1)
    cov = ((bx - mu1[..., None]) * (by - mu2[..., None])).mean(axis=-1)
    return _ssim_terms(mu1, mu2, var1, var2, cov, c1, c2)


def ssim(
    a: ImageLike,
    b: ImageLike,
    window: str = "gaussian",
    k1: float = 0.01,
    k2: float = 0.03,
    peak: float = 1.0,
) -> float:
    """
    Mean structural similarity of two images.

    Parameters
    ----------
    a, b : image
        Bayer planes, RGB frames or arrays of identical shape. RGB inputs are
        scored per channel and averaged.
    window : {"gaussian", "block"}
        "gaussian": 11x11 Gaussian window (sigma 1.5) slid over every valid
        position. "block": non-overlapping 8x8 blocks.
    k1, k2 : float
        Stabilizing constants, C1 = (k1 * peak)^2 and C2 = (k2 * peak)^2.
    peak : float
        Dynamic range of the data.

    Returns
    -------
    float
        Score in [-1, 1]; 1 for identical images.

    Raises
    ------
    GeometryError
        If shapes differ or the image is smaller than the window.
    """
    if window not in SSIM_WINDOWS:
        raise ConfigurationError(f"Unknown SSIM window {window}; use one of {SSIM_WINDOWS}.")
    x, y = _pair(a, b)
    size = GAUSSIAN_WINDOW if window == "gaussian" else BLOCK_WINDOW
    if x.shape[0] < size or x.shape[1] < size:
        raise GeometryError(f"Image {x.shape[1]}x{x.shape[0]} is smaller than the {size}x{size} SSIM window.")
    c1, c2 = (k1 * peak) ** 2, (k2 * peak) ** 2
    plane = _ssim_gaussian_plane if window == "gaussian" else _ssim_block_plane
    if x.ndim == 2:
        return float(plane(x, y, c1, c2).mean())
    return float(np.mean([plane(x[..., c], y[..., c], c1, c2).mean() for c in range(x.shape[2])]))


@dataclass(frozen=True)
class EvalPair:
    output: ImageLike
    target: ImageLike
    label: str
    lux: float
    pair_id: str | int | None = None


@dataclass(frozen=True)
class EvalRecord:
    pair_id: str | int
    label: str
    lux: float
    psnr: float
    ssim: float


def _lux_pivot(frame: pd.DataFrame) -> pd.DataFrame:
    table = frame.pivot_table(index="label", columns="lux", values=["psnr", "ssim"], aggfunc="mean")
    return table.swaplevel(axis=1).sort_index(axis=1)


def _format_metric_columns(frame: pd.DataFrame) -> pd.DataFrame:
    frame.columns = [f"{lux:g}lux_{metric.upper()}" for lux, metric in frame.columns]
    return frame


@dataclass(frozen=True)
class EvalTable:
    """Per-pair scores and their lux / label aggregates."""

    records: tuple[EvalRecord, ...]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.__dict__ for r in self.records])

    @property
    def by_lux(self) -> pd.DataFrame:
        """Rows = lux level (ascending); columns psnr, ssim, count."""
        frame = self.to_frame()
        grouped = frame.groupby("lux", sort=True).agg(
            psnr=("psnr", "mean"), ssim=("ssim", "mean"), count=("pair_id", "size")
        )
        return grouped

    @property
    def by_label(self) -> pd.DataFrame:
        """Rows = label, columns = (lux, metric); an "all" row comes first."""
        frame = self.to_frame()
        per_label = _lux_pivot(frame).sort_index()
        overall = _lux_pivot(frame.assign(label="all"))
        return pd.concat([overall, per_label])

    def to_csv(self, path: Path) -> None:
        """Wide layout: one row per label ("all" first), PSNR/SSIM per lux level."""
        wide = _format_metric_columns(self.by_label.copy())
        wide.to_csv(path, float_format="%.4f")


def evaluate_set(pairs: Sequence[EvalPair], window: str = "gaussian", peak: float = 1.0) -> EvalTable:
    """
    Score (output, ground truth) pairs and group the results by lux and label.

    Raises
    ------
    ConfigurationError
        For an empty set or a lux level outside {0.5, 1, 2, 5}.
    GeometryError
        If a pair's images disagree in shape or CFA pattern.
    """
    if not pairs:
        raise ConfigurationError("Cannot evaluate an empty set of pairs.")
    records = []
    for i, pair in enumerate(pairs):
        lux = float(pair.lux)
        if lux not in LUX_LEVELS:
            raise ConfigurationError(f"Lux level {pair.lux} is not one of {LUX_LEVELS}.")
        records.append(
            EvalRecord(
                pair_id=pair.pair_id if pair.pair_id is not None else i,
                label=pair.label,
                lux=lux,
                psnr=psnr(pair.output, pair.target, peak),
                ssim=ssim(pair.output, pair.target, window=window, peak=peak),
            )
        )
    logger.info("Evaluated %d pairs", len(records))
    return EvalTable(tuple(records))


def _load_any(path: Path) -> ImageLike:
    if path.suffix.lower() == ".raw":
        return read_image(path)
    return RgbImage(load_display_image(path))


def load_pairs_jsonl(path: Path) -> list[EvalPair]:
    """
    Read an evaluation list: one JSON object per line with keys
    output, target, label, lux and optionally pair_id. Image paths are
    relative to the list file; ``.raw`` files are read as containers, anything
    else as display-referred RGB.
    """
    path = Path(path)
    pairs = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
            pairs.append(
                EvalPair(
                    output=_load_any(path.parent / entry["output"]),
                    target=_load_any(path.parent / entry["target"]),
                    label=str(entry["label"]),
                    lux=float(entry["lux"]),
                    pair_id=entry.get("pair_id", lineno - 1),
                )
            )
        except (KeyError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"{path}:{lineno}: malformed pair entry ({exc}).") from exc
    return pairs
