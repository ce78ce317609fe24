from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .core_types import BayerImage, CfaPattern, RgbImage, fnv1a64
from .errors import RawFormatError

MAGIC = b"FSIDRAW1"
HEADER_SIZE = 32
BIT_DEPTH = 16
RGB_PATTERN_CODE = 255

# magic, width, height, pattern, bit depth, black, white
_HEADER = struct.Struct("<8sIIBBHH")


@dataclass(frozen=True)
class RawHeader:
    width: int
    height: int
    pattern_code: int
    bit_depth: int
    black_level: int
    white_level: int

    @property
    def is_rgb(self) -> bool:
        return self.pattern_code == RGB_PATTERN_CODE

    @property
    def pattern(self) -> CfaPattern | None:
        return None if self.is_rgb else CfaPattern(self.pattern_code)

    @property
    def planes(self) -> int:
        return 3 if self.is_rgb else 1

    def pack(self) -> bytes:
        head = _HEADER.pack(
            MAGIC,
            self.width,
            self.height,
            self.pattern_code,
            self.bit_depth,
            self.black_level,
            self.white_level,
        )
        return head + b"\x00" * (HEADER_SIZE - len(head))


def _check_levels(black: int, white: int) -> None:
    if not (0 <= black < white <= 0xFFFF):
        raise RawFormatError(f"Invalid black/white levels: {black}/{white}.")


def quantize(data: np.ndarray, black: int = 0, white: int = 65535) -> np.ndarray:
    """Map [0, 1] intensities to stored u16 samples: round(x * (white - black)) + black."""
    _check_levels(black, white)
    scaled = np.rint(np.clip(data, 0.0, 1.0).astype(np.float64) * (white - black)) + black
    return scaled.astype("<u2")


def dequantize(samples: np.ndarray, black: int = 0, white: int = 65535) -> np.ndarray:
    _check_levels(black, white)
    return ((samples.astype(np.float64) - black) / (white - black)).clip(0.0, 1.0).astype(np.float32)


def encode_bayer(img: BayerImage, black: int = 0, white: int = 65535) -> bytes:
    header = RawHeader(img.width, img.height, img.pattern.value, BIT_DEPTH, black, white)
    return header.pack() + quantize(img.data, black, white).tobytes()


def encode_rgb(img: RgbImage, black: int = 0, white: int = 65535) -> bytes:
    """Three planes (R, G, B), each row-major, after the shared header."""
    header = RawHeader(img.width, img.height, RGB_PATTERN_CODE, BIT_DEPTH, black, white)
    planar = np.moveaxis(img.data, 2, 0)
    return header.pack() + quantize(planar, black, white).tobytes()


def parse_header(blob: bytes) -> RawHeader:
    if len(blob) < HEADER_SIZE:
        raise RawFormatError(f"File too short for a header ({len(blob)} bytes).")
    magic, width, height, code, depth, black, white = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise RawFormatError(f"Bad magic {magic!r}, expected {MAGIC!r}.")
    if depth != BIT_DEPTH:
        raise RawFormatError(f"Unsupported bit depth {depth}.")
    if code != RGB_PATTERN_CODE and code not in {p.value for p in CfaPattern}:
        raise RawFormatError(f"Unknown pattern code {code}.")
    return RawHeader(width, height, code, depth, black, white)


def decode(blob: bytes) -> BayerImage | RgbImage:
    """Decode a container produced by `encode_bayer` or `encode_rgb`."""
    header = parse_header(blob)
    count = header.width * header.height * header.planes
    expected = HEADER_SIZE + 2 * count
    if len(blob) != expected:
        raise RawFormatError(f"Expected {expected} bytes, got {len(blob)}.")
    samples = np.frombuffer(blob, dtype="<u2", count=count, offset=HEADER_SIZE)
    values = dequantize(samples, header.black_level, header.white_level)
    if header.is_rgb:
        planes = values.reshape(3, header.height, header.width)
        return RgbImage(np.moveaxis(planes, 0, 2))
    return BayerImage(values.reshape(header.height, header.width), header.pattern)


def atomic_write_bytes(path: Path, payload: bytes) -> None:
    """Write to a temporary sibling and rename it over `path`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_image(path: Path, img: BayerImage | RgbImage, black: int = 0, white: int = 65535) -> int:
    """
    Write an image container atomically.

    Returns
    -------
    int
        FNV-1a 64 checksum of the written bytes.
    """
    if isinstance(img, BayerImage):
        payload = encode_bayer(img, black, white)
    else:
        payload = encode_rgb(img, black, white)
    atomic_write_bytes(path, payload)
    return fnv1a64(payload)


def read_image(path: Path) -> BayerImage | RgbImage:
    return decode(Path(path).read_bytes())


def read_header(path: Path) -> RawHeader:
    with open(path, "rb") as fh:
        return parse_header(fh.read(HEADER_SIZE))


def file_checksum(path: Path, chunk_size: int = 1 << 20) -> int:
    h = fnv1a64(b"")
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(chunk_size), b""):
            h = fnv1a64(chunk, start=h)
    return h


def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1.0 / 2.4) - 0.055)


def write_png_preview(path: Path, img: RgbImage | BayerImage) -> None:
    """8-bit sRGB-encoded PNG for eyeballing; never read back by the pipeline."""
    data = img.data
    if isinstance(img, BayerImage):
        data = np.repeat(data[:, :, None], 3, axis=2)
    encoded = np.rint(linear_to_srgb(data) * 255.0).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(encoded).save(path)


def load_display_image(path: Path) -> np.ndarray:
    """Load a PNG/JPEG as display-referred float RGB in [0, 1], shape (H, W, 3)."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return arr / 255.0
