from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

from .core_types import Rng, fnv1a64
from .errors import ConfigurationError

logger = logging.getLogger(__name__)

SCENE_SCHEMA_VERSION = 1
GENERATOR_CONFIG_VERSION = 1

SHAPES = ("sphere", "box", "cylinder", "plane_patch", "torus")
TEXTURE_KINDS = (
    "solid",
    "checker",
    "stripes",
    "value_noise",
    "multi_octave_noise",
    "voronoi_cells",
    "linear_gradient",
)
ROTATION_STEPS = 20
ROTATION_INCREMENT_DEG = 360.0 / ROTATION_STEPS
BACKGROUND_PLACEMENTS = ("floor", "ceiling", "wall_north", "wall_south", "wall_east", "wall_west")
COMPOSITION_MODES = ("object", "material", "object+material", "full")


@dataclass(frozen=True)
class Material:
    """Procedural material; `pattern_seed` keys the texture's lattice hash."""

    texture_kind: str
    palette: tuple[tuple[float, float, float], ...]
    spatial_scale: float
    roughness: float
    pattern_seed: int = 0

    def __post_init__(self) -> None:
        if self.texture_kind not in TEXTURE_KINDS:
            raise ConfigurationError(f"Unknown texture kind: {self.texture_kind}.")
        if not 2 <= len(self.palette) <= 4:
            raise ConfigurationError("Material palette must hold 2 to 4 colours.")
        for colour in self.palette:
            if len(colour) != 3 or any(not 0.0 <= c <= 1.0 for c in colour):
                raise ConfigurationError(f"Palette colour out of [0,1]^3: {colour}.")
        if self.spatial_scale <= 0:
            raise ConfigurationError("Material spatial_scale must be > 0.")
        if not 0.0 <= self.roughness <= 1.0:
            raise ConfigurationError("Material roughness must lie in [0, 1].")

    @classmethod
    def solid(cls, colour: tuple[float, float, float], roughness: float = 1.0) -> Material:
        return cls("solid", (tuple(colour), tuple(colour)), 1.0, roughness)


@dataclass(frozen=True)
class Transform:
    """Rotation as per-axis indices into 20 steps of 18 degrees, then translation and scale."""

    rotation: tuple[int, int, int] = (0, 0, 0)
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    scale: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self) -> None:
        if any(not 0 <= int(i) < ROTATION_STEPS for i in self.rotation):
            raise ConfigurationError(f"Rotation indices must lie in [0, {ROTATION_STEPS}).")
        if any(s <= 0 for s in self.scale):
            raise ConfigurationError("Scale factors must be > 0.")

    @property
    def rotation_degrees(self) -> tuple[float, float, float]:
        return tuple(i * ROTATION_INCREMENT_DEG for i in self.rotation)

    def rotation_matrix(self) -> np.ndarray:
        ax, ay, az = np.radians(self.rotation_degrees)
        cx, sx = np.cos(ax), np.sin(ax)
        cy, sy = np.cos(ay), np.sin(ay)
        cz, sz = np.cos(az), np.sin(az)
        rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
        ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
        rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
        return rz @ ry @ rx

    def world_to_local(self) -> np.ndarray:
        """Linear part of the inverse transform, S^-1 R^T."""
        return np.diag(1.0 / np.asarray(self.scale, dtype=np.float64)) @ self.rotation_matrix().T


@dataclass(frozen=True)
class ObjectInstance:
    shape: str
    material: Material
    transform: Transform

    def __post_init__(self) -> None:
        if self.shape not in SHAPES:
            raise ConfigurationError(f"Unknown shape: {self.shape}.")


@dataclass(frozen=True)
class BackgroundRegion:
    placement: str
    material: Material

    def __post_init__(self) -> None:
        if self.placement not in BACKGROUND_PLACEMENTS:
            raise ConfigurationError(f"Unknown background placement: {self.placement}.")


@dataclass(frozen=True)
class Light:
    """Point light (position used) or ambient term (position ignored)."""

    kind: str
    intensity: float
    color: tuple[float, float, float] = (1.0, 1.0, 1.0)
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if self.kind not in ("point", "ambient"):
            raise ConfigurationError(f"Unknown light kind: {self.kind}.")
        if self.intensity < 0:
            raise ConfigurationError("Light intensity must be >= 0.")


@dataclass(frozen=True)
class CameraConfig:
    width: int = 1920
    height: int = 1080
    fov: float = 90.0
    position: tuple[float, float, float] = (0.0, 1.6, 5.5)
    look_at: tuple[float, float, float] = (0.0, 1.6, 0.0)
    distortion: tuple[float, float] = (0.0, 0.0)
    samples_per_pixel: int = 4
    # 99th-percentile luma the frame is scaled to; None keeps unit exposure.
    exposure: float | None = None

    def __post_init__(self) -> None:
        if self.exposure is not None and not 0.0 < self.exposure <= 1.0:
            raise ConfigurationError(f"Camera exposure target must lie in (0, 1], got {self.exposure}.")
        if not 10.0 <= self.fov <= 170.0:
            raise ConfigurationError(f"Camera fov must lie in [10, 170] degrees, got {self.fov}.")
        if self.width <= 0 or self.height <= 0 or self.width % 2 or self.height % 2:
            raise ConfigurationError(f"Camera resolution must be positive and even, got {self.width}x{self.height}.")
        if self.samples_per_pixel < 1:
            raise ConfigurationError("samples_per_pixel must be >= 1.")


@dataclass(frozen=True)
class SceneSpec:
    """Complete declarative description of one procedural scene."""

    scene_id: int
    seed: int
    objects: tuple[ObjectInstance, ...]
    background: tuple[BackgroundRegion, ...]
    lights: tuple[Light, ...]
    camera: CameraConfig
    room_size: tuple[float, float, float] = (10.0, 6.0, 12.0)
    stream_id: int = 0
    schema_version: int = SCENE_SCHEMA_VERSION

    def __post_init__(self) -> None:
        if not self.background:
            raise ConfigurationError("A scene needs at least one background region.")
        covered = {region.placement for region in self.background}
        missing = set(BACKGROUND_PLACEMENTS) - covered
        if missing:
            raise ConfigurationError(f"Background regions leave the room open: missing {sorted(missing)}.")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> int:
        return fnv1a64(self.to_json().encode("utf-8"))

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> SceneSpec:
        version = payload.get("schema_version", SCENE_SCHEMA_VERSION)
        if version != SCENE_SCHEMA_VERSION:
            raise ConfigurationError(f"Unsupported scene schema version {version}.")

        def material(m: dict[str, Any]) -> Material:
            return Material(
                texture_kind=m["texture_kind"],
                palette=tuple(tuple(c) for c in m["palette"]),
                spatial_scale=m["spatial_scale"],
                roughness=m["roughness"],
                pattern_seed=m.get("pattern_seed", 0),
            )

        objects = tuple(
            ObjectInstance(
                shape=o["shape"],
                material=material(o["material"]),
                transform=Transform(
                    rotation=tuple(o["transform"]["rotation"]),
                    translation=tuple(o["transform"]["translation"]),
                    scale=tuple(o["transform"]["scale"]),
                ),
            )
            for o in payload["objects"]
        )
        background = tuple(
            BackgroundRegion(placement=b["placement"], material=material(b["material"]))
            for b in payload["background"]
        )
        lights = tuple(
            Light(
                kind=l["kind"],
                intensity=l["intensity"],
                color=tuple(l["color"]),
                position=tuple(l["position"]),
            )
            for l in payload["lights"]
        )
        cam = payload["camera"]
        camera = CameraConfig(
            width=cam["width"],
            height=cam["height"],
            fov=cam["fov"],
            position=tuple(cam["position"]),
            look_at=tuple(cam["look_at"]),
            distortion=tuple(cam["distortion"]),
            samples_per_pixel=cam["samples_per_pixel"],
            exposure=cam.get("exposure"),
        )
        return cls(
            scene_id=payload["scene_id"],
            seed=payload["seed"],
            objects=objects,
            background=background,
            lights=lights,
            camera=camera,
            room_size=tuple(payload["room_size"]),
            stream_id=payload.get("stream_id", 0),
            schema_version=version,
        )

    @classmethod
    def from_json(cls, text: str) -> SceneSpec:
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class GeneratorConfig:
    """
    Pools and ranges the scene sampler draws from.

    Ranges are inclusive (low, high) pairs. Defaults keep most of a 90 degree
    view covered by objects in a 10 x 6 x 12 room.
    """

    shapes: tuple[str, ...] = SHAPES
    texture_kinds: tuple[str, ...] = TEXTURE_KINDS
    background_texture_kinds: tuple[str, ...] = TEXTURE_KINDS
    n_objects: tuple[int, int] = (8, 24)
    palette_size: tuple[int, int] = (2, 4)
    object_texture_scale: tuple[float, float] = (1.0, 6.0)
    background_texture_scale: tuple[float, float] = (0.5, 3.0)
    scale_range: tuple[float, float] = (0.4, 1.3)
    room_size: tuple[float, float, float] = (10.0, 6.0, 12.0)
    point_lights: tuple[int, int] = (1, 3)
    light_intensity: tuple[float, float] = (0.5, 2.0)
    ambient: tuple[float, float] = (0.05, 0.2)
    width: int = 1920
    height: int = 1080
    fov: float = 90.0
    distortion: tuple[float, float] = (0.0, 0.0)
    samples_per_pixel: int = 4
    exposure: float | None = 0.8
    composition: str = "full"
    version: int = GENERATOR_CONFIG_VERSION

    def validate(self) -> None:
        if not self.shapes or not self.texture_kinds or not self.background_texture_kinds:
            raise ConfigurationError("Shape and texture pools must be non-empty.")
        unknown = set(self.shapes) - set(SHAPES)
        if unknown:
            raise ConfigurationError(f"Unknown shapes in pool: {sorted(unknown)}.")
        unknown = (set(self.texture_kinds) | set(self.background_texture_kinds)) - set(TEXTURE_KINDS)
        if unknown:
            raise ConfigurationError(f"Unknown texture kinds in pool: {sorted(unknown)}.")
        for name in ("n_objects", "palette_size", "object_texture_scale", "background_texture_scale",
                     "scale_range", "point_lights", "light_intensity", "ambient"):
            low, high = getattr(self, name)
            if low > high:
                raise ConfigurationError(f"{name}: low {low} exceeds high {high}.")
        if self.n_objects[0] < 0 or self.point_lights[0] < 0:
            raise ConfigurationError("Object and light counts must be >= 0.")
        if self.palette_size[0] < 2 or self.palette_size[1] > 4:
            raise ConfigurationError("Palette size must lie in [2, 4].")
        if self.exposure is not None and not 0.0 < self.exposure <= 1.0:
            raise ConfigurationError(f"exposure must lie in (0, 1], got {self.exposure}.")
        if self.composition not in COMPOSITION_MODES:
            raise ConfigurationError(
                f"Unknown composition mode {self.composition}; use one of {COMPOSITION_MODES}."
            )

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> GeneratorConfig:
        known = {f for f in cls.__dataclass_fields__}
        extra = set(payload) - known
        if extra:
            raise ConfigurationError(f"Unknown generator config keys: {sorted(extra)}.")
        values = {k: tuple(v) if isinstance(v, list) else v for k, v in payload.items()}
        if values.get("version", GENERATOR_CONFIG_VERSION) != GENERATOR_CONFIG_VERSION:
            raise ConfigurationError(f"Unsupported generator config version {values['version']}.")
        return cls(**values)


def _uniform(gen: np.random.Generator, bounds: tuple[float, float]) -> float:
    return float(gen.uniform(bounds[0], bounds[1])) if bounds[0] < bounds[1] else float(bounds[0])


def _integer(gen: np.random.Generator, bounds: tuple[int, int]) -> int:
    return int(gen.integers(bounds[0], bounds[1], endpoint=True))


def _choice(gen: np.random.Generator, pool: tuple[str, ...]) -> str:
    return pool[int(gen.integers(0, len(pool)))]


def _sample_material(
    gen: np.random.Generator,
    kinds: tuple[str, ...],
    palette_size: tuple[int, int],
    scale_bounds: tuple[float, float],
) -> Material:
    kind = _choice(gen, kinds)
    n_colours = _integer(gen, palette_size)
    palette = tuple(tuple(float(c) for c in gen.uniform(0.0, 1.0, size=3)) for _ in range(n_colours))
    return Material(
        texture_kind=kind,
        palette=palette,
        spatial_scale=_uniform(gen, scale_bounds),
        roughness=float(gen.uniform(0.0, 1.0)),
        pattern_seed=int(gen.integers(0, 2**32)),
    )


def sample_scene(rng: Rng, cfg: GeneratorConfig | None = None, scene_id: int = 0) -> SceneSpec:
    """
    Draw a random scene from the configured pools.

    Every draw comes from `rng` in a fixed order, so (rng, cfg) always
    reproduces the same SceneSpec.

    Parameters
    ----------
    rng : Rng
        Stream owned by this scene.
    cfg : GeneratorConfig, optional
        Pools and ranges; library defaults if omitted.
    scene_id : int
        Index t of the scene within its batch.

    Returns
    -------
    SceneSpec
        A valid scene.

    Raises
    ------
    ConfigurationError
        If a pool is empty or a range is inverted.
    """
    cfg = cfg if cfg is not None else GeneratorConfig()
    cfg.validate()
    gen = rng.generator()

    width, height, depth = cfg.room_size
    half_w, half_d = width / 2.0, depth / 2.0

    random_shapes = cfg.composition in ("object", "object+material", "full")
    random_materials = cfg.composition in ("material", "object+material", "full")
    random_rotation = cfg.composition == "full"

    # Draw the material used by every object when materials are not randomized.
    fixed_material = _sample_material(gen, cfg.texture_kinds, cfg.palette_size, cfg.object_texture_scale)

    camera_pos = (
        float(gen.uniform(-1.0, 1.0)),
        float(gen.uniform(1.2, min(2.5, height - 0.5))),
        half_d - 0.5,
    )
    look_at = (
        float(gen.uniform(-1.5, 1.5)),
        float(gen.uniform(0.8, min(2.4, height - 0.5))),
        float(gen.uniform(-half_d + 2.0, 0.0)),
    )
    camera = CameraConfig(
        width=cfg.width,
        height=cfg.height,
        fov=cfg.fov,
        position=camera_pos,
        look_at=look_at,
        distortion=tuple(cfg.distortion),
        samples_per_pixel=cfg.samples_per_pixel,
        exposure=cfg.exposure,
    )

    objects = []
    for _ in range(_integer(gen, cfg.n_objects)):
        shape = _choice(gen, cfg.shapes) if random_shapes else "sphere"
        material = (
            _sample_material(gen, cfg.texture_kinds, cfg.palette_size, cfg.object_texture_scale)
            if random_materials
            else fixed_material
        )
        rotation = (
            tuple(int(i) for i in gen.integers(0, ROTATION_STEPS, size=3))
            if random_rotation
            else (0, 0, 0)
        )
        translation = (
            float(gen.uniform(-half_w + 1.0, half_w - 1.0)),
            float(gen.uniform(0.5, height - 1.0)),
            float(gen.uniform(-half_d + 1.0, half_d - 2.5)),
        )
        scale = tuple(float(s) for s in gen.uniform(cfg.scale_range[0], cfg.scale_range[1], size=3))
        if shape == "sphere":
            # Spheres stay round; anisotropic scale would only make ellipsoids.
            scale = (scale[0],) * 3
        objects.append(ObjectInstance(shape, material, Transform(rotation, translation, scale)))

    background = tuple(
        BackgroundRegion(
            placement,
            _sample_material(gen, cfg.background_texture_kinds, cfg.palette_size, cfg.background_texture_scale),
        )
        for placement in BACKGROUND_PLACEMENTS
    )

    lights = [Light("ambient", _uniform(gen, cfg.ambient))]
    for _ in range(_integer(gen, cfg.point_lights)):
        colour = tuple(float(c) for c in gen.uniform(0.8, 1.0, size=3))
        position = (
            float(gen.uniform(-half_w + 0.5, half_w - 0.5)),
            float(gen.uniform(height * 0.6, height - 0.3)),
            float(gen.uniform(-half_d + 0.5, half_d - 0.5)),
        )
        lights.append(Light("point", _uniform(gen, cfg.light_intensity), colour, position))

    spec = SceneSpec(
        scene_id=scene_id,
        seed=rng.seed,
        stream_id=rng.stream_id,
        objects=tuple(objects),
        background=background,
        lights=tuple(lights),
        camera=camera,
        room_size=tuple(cfg.room_size),
    )
    logger.debug("Sampled scene %d with %d objects", scene_id, len(objects))
    return spec
