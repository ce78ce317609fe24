from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import GeometryError

_MASK64 = 0xFFFFFFFFFFFFFFFF
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes, start: int = _FNV_OFFSET) -> int:
    """
    64-bit FNV-1a hash of a byte string.

    Used for RNG stream labels, config hashes and file checksums. Not a
    cryptographic hash: it only detects accidental corruption.

    Parameters
    ----------
    data : bytes
        Bytes to hash.
    start : int
        Running hash value, so large files can be hashed chunk by chunk.

    Returns
    -------
    int
        Hash value in [0, 2**64).
    """
    h = start
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


class Channel(str, Enum):
    R = "R"
    G = "G"
    B = "B"

    @property
    def index(self) -> int:
        return "RGB".index(self.value)


class CfaPattern(Enum):
    """2x2 colour filter array layouts; the value is the on-disk pattern code."""

    RGGB = 0
    BGGR = 1
    GRBG = 2
    GBRG = 3

    @classmethod
    def parse(cls, value: str | int | CfaPattern) -> CfaPattern:
        if isinstance(value, CfaPattern):
            return value
        if isinstance(value, int):
            return cls(value)
        try:
            return cls[value.upper()]
        except KeyError:
            raise GeometryError(
                f"Unknown CFA pattern: {value}. Use one of {[p.name for p in cls]}."
            ) from None

    @property
    def layout(self) -> tuple[tuple[Channel, Channel], tuple[Channel, Channel]]:
        letters = self.name
        return (
            (Channel(letters[0]), Channel(letters[1])),
            (Channel(letters[2]), Channel(letters[3])),
        )

    def channel_index_map(self, height: int, width: int) -> np.ndarray:
        """
        Per-pixel channel index (0=R, 1=G, 2=B) for a frame of the given size.

        Parameters
        ----------
        height, width : int
            Frame size in pixels (even).

        Returns
        -------
        np.ndarray
            Integer array of shape (height, width).
        """
        tile = np.array([[c.index for c in row] for row in self.layout], dtype=np.int8)
        return np.tile(tile, (height // 2, width // 2))


def _frozen_array(data: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(data, dtype=np.float32)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RgbImage:
    """
    Linear-light RGB frame, shape (height, width, 3), float32.

    Samples of the final frame are in [0, 1]; intermediates built with
    `clamp=False` may exceed 1.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise GeometryError(f"RGB data must have shape (H, W, 3), got {arr.shape}.")
        if not np.all(np.isfinite(arr)):
            raise GeometryError("RGB data contains NaN or Inf.")
        object.__setattr__(self, "data", _frozen_array(arr))

    @classmethod
    def from_array(cls, data: np.ndarray, clamp: bool = True) -> RgbImage:
        arr = np.asarray(data, dtype=np.float64)
        if clamp:
            arr = np.clip(arr, 0.0, 1.0)
        return cls(arr)

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])


@dataclass(frozen=True, eq=False)
class BayerImage:
    """Single-plane mosaicked frame in [0, 1] with a declared CFA pattern."""

    data: np.ndarray
    pattern: CfaPattern = CfaPattern.RGGB

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise GeometryError(f"Bayer data must be 2-D, got shape {arr.shape}.")
        if arr.shape[0] % 2 or arr.shape[1] % 2:
            raise GeometryError(f"Bayer dimensions must be even, got {arr.shape[1]}x{arr.shape[0]}.")
        if not np.all(np.isfinite(arr)):
            raise GeometryError("Bayer data contains NaN or Inf.")
        object.__setattr__(self, "data", _frozen_array(arr))
        object.__setattr__(self, "pattern", CfaPattern.parse(self.pattern))

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    def channel_index_map(self) -> np.ndarray:
        return self.pattern.channel_index_map(self.height, self.width)

    def same_geometry(self, other: BayerImage) -> bool:
        return self.data.shape == other.data.shape and self.pattern is other.pattern


def channel_at(img: BayerImage, row: int, col: int) -> Channel:
    """
    Colour channel sampled at pixel (row, col) of a Bayer frame.

    Raises
    ------
    GeometryError
        If the index lies outside the frame.
    """
    if not (0 <= row < img.height and 0 <= col < img.width):
        raise GeometryError(
            f"Pixel ({row}, {col}) is outside a {img.width}x{img.height} frame."
        )
    return img.pattern.layout[row % 2][col % 2]


@dataclass(frozen=True)
class Rng:
    """
    Splittable, counter-based random stream.

    A stream is identified by (seed, stream_id); samples come from numpy's
    Philox4x64 generator keyed with both words, so a stream reproduces the
    same sequence on every platform. Streams are single-owner: hand child
    streams (`derive_stream`) to concurrent tasks instead of sharing one.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "stream_id", int(self.stream_id) & _MASK64)

    def derive_stream(self, label: str) -> Rng:
        return derive_stream(self, label)

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def derive_stream(parent: Rng, label: str) -> Rng:
    """
    Deterministic child stream of `parent` named by `label`.

    The child keeps the parent's seed; its stream id is the FNV-1a hash of the
    parent's stream id followed by the UTF-8 label.
    """
    payload = parent.stream_id.to_bytes(8, "little") + label.encode("utf-8")
    return Rng(seed=parent.seed, stream_id=fnv1a64(payload))
