from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .calibration import NoiseProfile
from .core_types import CfaPattern, fnv1a64
from .errors import ConfigurationError
from .scene_gen import GeneratorConfig
from .unprocess import IspRandomization

BUILD_FORMAT_VERSION = 1
SOURCES = ("procedural", "folder")


@dataclass
class DefaultConfig:
    """
    Default configuration for the data generator.
    """

    # Diversity gate
    edge_threshold: float = 0.1  # Sobel magnitude threshold, intensity units
    edge_band: tuple[float, float] = (0.08, 0.45)  # Accepted batch mean edge ratio

    # Calibration
    calibration_bins: int = 64  # Equal-width intensity bins over [0, 1]
    min_samples_per_bin: int = 100
    min_bins: int = 10
    clip_margin: float = 0.02  # Drop sites this close to black/white level

    # Noise injection
    gain_range: tuple[float, float] = (0.25, 4.0)  # Log-uniform noise-level multiplier
    clamp: bool = True

    # RAW container
    black_level: int = 0
    white_level: int = 65535
    pattern: str = "RGGB"

    # Dataset
    shard_size: int = 1000  # Pairs per shard directory
    spot_check_fraction: float = 0.01  # Share of clean frames re-rendered by verify

    # Rendering
    width: int = 1920  # Full HD
    height: int = 1080
    test_width: int = 256
    test_height: int = 256

    # Metrics
    ssim_window: str = "gaussian"  # "gaussian" (11x11, sigma 1.5) or "block" (8x8)
    lux_levels: tuple[float, ...] = (0.5, 1.0, 2.0, 5.0)


def load_json(path: Path) -> dict[str, Any]:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path} is not valid JSON: {exc}") from exc


def _load_profile(entry: str | dict[str, Any], base_dir: Path) -> NoiseProfile:
    if isinstance(entry, dict):
        return NoiseProfile.from_dict(entry)
    path = Path(entry)
    if not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise ConfigurationError(f"Noise profile {path} does not exist.")
    return NoiseProfile.load(path)


@dataclass(frozen=True)
class BuildConfig:
    """
    Everything `build` needs to reproduce a dataset bit for bit.

    Profiles in a JSON config may be file paths (relative to the config file)
    or inline objects; `to_dict` always embeds them so the manifest header is
    self-contained.
    """

    count: int = 10
    seed: int = 0
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    profiles: tuple[NoiseProfile, ...] = ()
    isp: IspRandomization = field(default_factory=IspRandomization)
    pattern: str = "RGGB"
    gain_range: tuple[float, float] = (0.25, 4.0)
    clamp: bool = True
    black: int = 0
    white: int = 65535
    shard_size: int = 1000
    source: str = "procedural"
    source_dir: str | None = None
    # Directory relative paths resolve against; not part of the config hash.
    base_dir: str | None = field(default=None, compare=False)

    def validate(self) -> None:
        if self.count < 1:
            raise ConfigurationError(f"count must be >= 1, got {self.count}.")
        if not self.profiles:
            raise ConfigurationError("A build needs at least one noise profile.")
        if self.shard_size < 1:
            raise ConfigurationError(f"shard_size must be >= 1, got {self.shard_size}.")
        if self.source not in SOURCES:
            raise ConfigurationError(f"Unknown source {self.source}; use one of {SOURCES}.")
        if self.source == "folder" and not self.source_dir:
            raise ConfigurationError("source 'folder' needs source_dir.")
        low, high = self.gain_range
        if not 0.0 < low <= high:
            raise ConfigurationError(f"gain_range must satisfy 0 < low <= high, got {self.gain_range}.")
        if not 0 <= self.black < self.white <= 0xFFFF:
            raise ConfigurationError(f"Invalid black/white levels {self.black}/{self.white}.")
        CfaPattern.parse(self.pattern)
        self.generator.validate()

    @property
    def source_path(self) -> Path | None:
        """`source_dir` resolved against the directory the config was loaded from."""
        if self.source_dir is None:
            return None
        path = Path(self.source_dir)
        if not path.is_absolute() and self.base_dir is not None:
            path = Path(self.base_dir) / path
        return path

    @property
    def cfa_pattern(self) -> CfaPattern:
        return CfaPattern.parse(self.pattern)

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": BUILD_FORMAT_VERSION,
            "count": self.count,
            "seed": self.seed,
            "generator": self.generator.to_dict(),
            "profiles": [p.to_dict() for p in self.profiles],
            "isp": self.isp.to_dict(),
            "pattern": self.pattern,
            "gain_range": list(self.gain_range),
            "clamp": self.clamp,
            "black": self.black,
            "white": self.white,
            "shard_size": self.shard_size,
            "source": self.source,
            "source_dir": self.source_dir,
        }

    def config_hash(self) -> str:
        """FNV-1a 64 of the canonical JSON form, as 16 hex digits."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return f"{fnv1a64(canonical.encode('utf-8')):016x}"

    @classmethod
    def from_dict(cls, payload: dict[str, Any], base_dir: Path | None = None) -> BuildConfig:
        base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
        payload = dict(payload)
        version = payload.pop("format_version", BUILD_FORMAT_VERSION)
        if version != BUILD_FORMAT_VERSION:
            raise ConfigurationError(f"Unsupported build config version {version}.")
        known = set(cls.__dataclass_fields__) - {"base_dir"}
        extra = set(payload) - known
        if extra:
            raise ConfigurationError(f"Unknown build config keys: {sorted(extra)}.")

        cfg = cls(
            count=int(payload.get("count", 10)),
            seed=int(payload.get("seed", 0)),
            generator=GeneratorConfig.from_dict(payload.get("generator", {})),
            profiles=tuple(_load_profile(p, base_dir) for p in payload.get("profiles", [])),
            isp=IspRandomization.from_dict(payload.get("isp", {})),
            pattern=payload.get("pattern", "RGGB"),
            gain_range=tuple(payload.get("gain_range", (0.25, 4.0))),
            clamp=bool(payload.get("clamp", True)),
            black=int(payload.get("black", 0)),
            white=int(payload.get("white", 65535)),
            shard_size=int(payload.get("shard_size", 1000)),
            source=payload.get("source", "procedural"),
            source_dir=payload.get("source_dir"),
            base_dir=str(base_dir.resolve()),
        )
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: Path) -> BuildConfig:
        path = Path(path)
        return cls.from_dict(load_json(path), base_dir=path.parent)
