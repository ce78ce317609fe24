from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import ndimage
from scipy.stats import entropy

from .core_types import RgbImage
from .errors import ConfigurationError

logger = logging.getLogger(__name__)

# Rec.709 luma weights.
LUMA_WEIGHTS = np.array([0.2126, 0.7152, 0.0722])
HISTOGRAM_LEVELS = 8
# Sobel taps sum to 4 per side; dividing keeps a unit step at magnitude 1.
_SOBEL_NORM = 4.0


@dataclass(frozen=True)
class DiversityReport:
    edge_ratios: tuple[float, ...]
    color_entropies: tuple[float, ...]
    mean_edge_ratio: float
    std_edge_ratio: float
    mean_color_entropy: float
    threshold: float
    band: tuple[float, float]
    accepted: bool

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_frame(self, names: Sequence[str] | None = None) -> pd.DataFrame:
        """Per-image table (edge ratio, colour entropy)."""
        index = list(names) if names is not None else list(range(len(self.edge_ratios)))
        return pd.DataFrame(
            {"edge_ratio": self.edge_ratios, "color_entropy": self.color_entropies},
            index=pd.Index(index, name="image"),
        )


def luma(img: RgbImage) -> np.ndarray:
    return img.data.astype(np.float64) @ LUMA_WEIGHTS


def gradient_magnitude(img: RgbImage) -> np.ndarray:
    """Sobel gradient magnitude of the luma plane, reflect-padded borders."""
    y = luma(img)
    gx = ndimage.sobel(y, axis=1, mode="reflect") / _SOBEL_NORM
    gy = ndimage.sobel(y, axis=0, mode="reflect") / _SOBEL_NORM
    return np.hypot(gx, gy)


def edge_ratio(img: RgbImage, threshold: float = 0.1) -> float:
    """
    Fraction of pixels whose luma gradient magnitude exceeds `threshold`.

    A unit step in luma produces magnitude 1 on the two columns (or rows)
    adjacent to it, so the threshold is in intensity units.
    """
    if threshold <= 0:
        raise ConfigurationError(f"Edge threshold must be > 0, got {threshold}.")
    magnitude = gradient_magnitude(img)
    return float(np.count_nonzero(magnitude > threshold)) / magnitude.size


def color_entropy(img: RgbImage) -> float:
    """Shannon entropy (bits) of the 8x8x8 joint RGB histogram."""
    levels = HISTOGRAM_LEVELS
    q = np.clip((img.data.astype(np.float64) * levels).astype(np.int64), 0, levels - 1)
    bins = (q[..., 0] * levels + q[..., 1]) * levels + q[..., 2]
    counts = np.bincount(bins.ravel(), minlength=levels**3)
    return float(entropy(counts, base=2))


def validate_batch(
    imgs: Sequence[RgbImage],
    band: tuple[float, float] = (0.08, 0.45),
    threshold: float = 0.1,
) -> DiversityReport:
    """
    Gate a batch of renders on its mean edge ratio.

    Parameters
    ----------
    imgs : sequence of RgbImage
        Batch to analyse.
    band : (low, high)
        Accepted range of the batch mean edge ratio, inclusive.
    threshold : float
        Gradient magnitude threshold passed to `edge_ratio`.

    Returns
    -------
    DiversityReport
        Per-image values, batch statistics and the accept flag.
    """
    low, high = band
    if not low < high:
        raise ConfigurationError(f"Band must satisfy low < high, got {band}.")
    if len(imgs) == 0:
        raise ConfigurationError("Cannot validate an empty batch.")

    ratios = np.array([edge_ratio(img, threshold) for img in imgs])
    entropies = np.array([color_entropy(img) for img in imgs])
    mean = float(ratios.mean())
    accepted = bool(low <= mean <= high)
    logger.info(
        "Diversity: %d images, mean edge ratio %.4f (band %.2f-%.2f) -> %s",
        len(imgs),
        mean,
        low,
        high,
        "accepted" if accepted else "rejected",
    )
    return DiversityReport(
        edge_ratios=tuple(float(r) for r in ratios),
        color_entropies=tuple(float(e) for e in entropies),
        mean_edge_ratio=mean,
        std_edge_ratio=float(ratios.std()),
        mean_color_entropy=float(entropies.mean()),
        threshold=float(threshold),
        band=(float(low), float(high)),
        accepted=accepted,
    )
