from __future__ import annotations

import numpy as np
import pytest

from src.calibration import NoiseProfile
from src.config import BuildConfig
from src.scene_gen import (
    BACKGROUND_PLACEMENTS,
    BackgroundRegion,
    CameraConfig,
    GeneratorConfig,
    Light,
    Material,
    SceneSpec,
)


@pytest.fixture
def small_generator() -> GeneratorConfig:
    """Few objects at 64x64 with one sample per pixel."""
    return GeneratorConfig(n_objects=(2, 4), width=64, height=64, samples_per_pixel=1)


@pytest.fixture
def oracle_profile() -> NoiseProfile:
    return NoiseProfile.uniform(0.01, 0.0004, camera="oracle", gain="unity")


@pytest.fixture
def zero_profile() -> NoiseProfile:
    return NoiseProfile.uniform(0.0, 0.0, camera="clean", gain="none")


@pytest.fixture
def small_build(small_generator, oracle_profile) -> BuildConfig:
    return BuildConfig(count=3, seed=11, generator=small_generator, profiles=(oracle_profile,))


def room_scene(
    material: Material,
    lights: tuple[Light, ...] = (Light("ambient", 1.0),),
    objects: tuple = (),
    size: int = 64,
) -> SceneSpec:
    """Empty box room with the same material on every face."""
    return SceneSpec(
        scene_id=0,
        seed=0,
        objects=objects,
        background=tuple(BackgroundRegion(p, material) for p in BACKGROUND_PLACEMENTS),
        lights=lights,
        camera=CameraConfig(width=size, height=size, samples_per_pixel=1),
    )


def checkerboard(size: int = 64, cell: int = 1) -> np.ndarray:
    rows, cols = np.indices((size, size))
    board = (((rows // cell) + (cols // cell)) % 2).astype(np.float64)
    return np.repeat(board[:, :, None], 3, axis=2)
