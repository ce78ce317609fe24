from __future__ import annotations

from pathlib import Path


class FsidError(Exception):
    """Base class for every error raised by the data generator."""


class ConfigurationError(FsidError, ValueError):
    """Invalid or inconsistent configuration (empty pools, bad ranges, ...)."""


class GeometryError(FsidError, ValueError):
    """Image dimensions, CFA patterns or indices that do not line up."""


class RawFormatError(FsidError, ValueError):
    """A RAW/RGB container file that cannot be parsed."""


class UnprocessError(FsidError, ValueError):
    """Inverse ISP stage that cannot be applied (e.g. singular CCM)."""


class NoiseModelError(FsidError, ValueError):
    """Noise model evaluated to an impossible (negative) variance."""


class InsufficientBinsError(FsidError, ValueError):
    """
    Not enough populated intensity bins to fit a noise line.

    Parameters
    ----------
    message : str
        Human readable reason.
    occupancy : dict[str, list[int]]
        Per-channel sample count of every intensity bin.
    """

    def __init__(self, message: str, occupancy: dict[str, list[int]]) -> None:
        super().__init__(message)
        self.occupancy = occupancy


class DatasetBuildError(FsidError):
    """A dataset build aborted; `recovery_path` points at the partial manifest."""

    def __init__(self, message: str, recovery_path: Path | None = None) -> None:
        super().__init__(message)
        self.recovery_path = recovery_path
