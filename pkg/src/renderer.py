from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from . import textures
from .core_types import RgbImage
from .diversity import LUMA_WEIGHTS
from .errors import ConfigurationError
from .scene_gen import BACKGROUND_PLACEMENTS, CameraConfig, Material, ObjectInstance, SceneSpec

logger = logging.getLogger(__name__)

_EPS = 1e-4
_SHADOW_BIAS = 1e-3
_TORUS_MAJOR = 0.7
_TORUS_MINOR = 0.3
_MARCH_STEPS = 96
_MARCH_HIT = 1e-4
_CHUNK = 1 << 16
_ATTENUATION = 0.02
_EXPOSURE_PERCENTILE = 99.0
_MAX_DISTORTION = 0.5

# Radius of the sphere bounding each unit primitive in local space.
_LOCAL_RADIUS = {
    "sphere": 1.0,
    "box": math.sqrt(3.0),
    "cylinder": math.sqrt(2.0),
    "plane_patch": math.sqrt(2.0),
    "torus": 1.0,
}

# face index -> placement: axis 0/1/2, negative then positive direction of travel
_FACES = ("wall_west", "wall_east", "floor", "ceiling", "wall_north", "wall_south")


def apply_distortion(grid: np.ndarray, k1: float, k2: float) -> np.ndarray:
    """
    Brown-Conrady radial distortion of normalized image coordinates.

    r' = r * (1 + k1 * r^2 + k2 * r^4), applied about the optical centre.

    Parameters
    ----------
    grid : np.ndarray
        Array of shape (..., 2) holding normalized (x, y) coordinates.
    k1, k2 : float
        Radial coefficients, each with magnitude at most 0.5.

    Returns
    -------
    np.ndarray
        Warped coordinates with the same shape as `grid`.

    Raises
    ------
    ConfigurationError
        If a coefficient is out of range or r' is not monotone over the grid.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if abs(k1) > _MAX_DISTORTION or abs(k2) > _MAX_DISTORTION:
        raise ConfigurationError(f"Distortion coefficients must satisfy |k| <= {_MAX_DISTORTION}.")
    if k1 == 0.0 and k2 == 0.0:
        return grid.copy()

    r2 = np.sum(grid * grid, axis=-1, keepdims=True)
    r_max = math.sqrt(float(r2.max())) if r2.size else 0.0
    radii = np.linspace(0.0, r_max, 512)
    slope = 1.0 + 3.0 * k1 * radii**2 + 5.0 * k2 * radii**4
    if np.any(slope <= 0.0):
        raise ConfigurationError(
            f"Distortion (k1={k1}, k2={k2}) folds the image: r' is not monotone up to r={r_max:.3f}."
        )
    return grid * (1.0 + k1 * r2 + k2 * r2 * r2)


def subpixel_offsets(samples_per_pixel: int) -> np.ndarray:
    """Fixed sample positions inside a pixel: a regular grid, or an R2 sequence for non-squares."""
    side = math.isqrt(samples_per_pixel)
    if side * side == samples_per_pixel:
        ticks = (np.arange(side) + 0.5) / side
        ox, oy = np.meshgrid(ticks, ticks)
        return np.stack([ox.ravel(), oy.ravel()], axis=1)
    plastic = 1.32471795724474602596
    alpha = np.array([1.0 / plastic, 1.0 / plastic**2])
    n = np.arange(samples_per_pixel)[:, None]
    return (0.5 + n * alpha) % 1.0


def _normalize(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(norm > 0.0, norm, 1.0)


def camera_rays(camera: CameraConfig, offset: tuple[float, float]) -> tuple[np.ndarray, np.ndarray]:
    """
    Primary rays for one sub-pixel offset, row-major over the frame.

    Returns
    -------
    origins, directions : np.ndarray
        Arrays of shape (height * width, 3); directions are unit length.
    """
    w, h = camera.width, camera.height
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    x = (cols + offset[0]) / w * 2.0 - 1.0
    y = (1.0 - (rows + offset[1]) / h * 2.0) * (h / w)
    xy = apply_distortion(np.stack([x, y], axis=-1), *camera.distortion)

    position = np.asarray(camera.position, dtype=np.float64)
    forward = _normalize(np.asarray(camera.look_at, dtype=np.float64) - position)
    world_up = np.array([0.0, 1.0, 0.0])
    if abs(float(forward @ world_up)) > 0.999:
        world_up = np.array([0.0, 0.0, 1.0])
    right = _normalize(np.cross(forward, world_up))
    up = np.cross(right, forward)

    half = math.tan(math.radians(camera.fov) / 2.0)
    dirs = (
        forward[None, :]
        + (xy[..., 0].reshape(-1, 1) * half) * right[None, :]
        + (xy[..., 1].reshape(-1, 1) * half) * up[None, :]
    )
    origins = np.broadcast_to(position, dirs.shape)
    return origins, _normalize(dirs)


@dataclass(frozen=True)
class _Prepared:
    shape: str
    material: Material
    translation: np.ndarray
    world_to_local: np.ndarray
    radius: float

    @classmethod
    def from_instance(cls, obj: ObjectInstance) -> _Prepared:
        return cls(
            shape=obj.shape,
            material=obj.material,
            translation=np.asarray(obj.transform.translation, dtype=np.float64),
            world_to_local=obj.transform.world_to_local(),
            radius=_LOCAL_RADIUS[obj.shape] * max(obj.transform.scale),
        )

    def candidates(self, origins: np.ndarray, dirs: np.ndarray, t_max: np.ndarray) -> np.ndarray:
        """Indices of rays that meet the bounding sphere before `t_max`."""
        oc = origins - self.translation
        a = np.sum(dirs * dirs, axis=1)
        b = 2.0 * np.sum(oc * dirs, axis=1)
        c = np.sum(oc * oc, axis=1) - self.radius**2
        t0, t1, real = _quadratic(a, b, c)
        return np.flatnonzero(real & (t1 > _EPS) & (t0 < t_max))

    def to_local(self, origins: np.ndarray, dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return (origins - self.translation) @ self.world_to_local.T, dirs @ self.world_to_local.T

    def normal_to_world(self, normals: np.ndarray) -> np.ndarray:
        return _normalize(normals @ self.world_to_local)


def _safe(d: np.ndarray) -> np.ndarray:
    return np.where(np.abs(d) < 1e-12, 1e-12, d)


def _finite(t: np.ndarray) -> np.ndarray:
    return np.where(np.isfinite(t), t, 0.0)


def _quadratic(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    disc = b * b - 4.0 * a * c
    root = np.sqrt(np.maximum(disc, 0.0))
    a2 = 2.0 * np.where(np.abs(a) < 1e-12, 1e-12, a)
    return (-b - root) / a2, (-b + root) / a2, disc >= 0.0


def _hit_sphere(o: np.ndarray, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.sum(d * d, axis=1)
    b = 2.0 * np.sum(o * d, axis=1)
    c = np.sum(o * o, axis=1) - 1.0
    t0, t1, real = _quadratic(a, b, c)
    t = np.where(t0 > _EPS, t0, np.where(t1 > _EPS, t1, np.inf))
    t = np.where(real, t, np.inf)
    return t, o + _finite(t)[:, None] * d


def _hit_box(o: np.ndarray, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    inv = 1.0 / _safe(d)
    t1 = (-1.0 - o) * inv
    t2 = (1.0 - o) * inv
    near = np.max(np.minimum(t1, t2), axis=1)
    far = np.min(np.maximum(t1, t2), axis=1)
    t = np.where(near > _EPS, near, far)
    t = np.where((far >= near) & (far > _EPS), t, np.inf)
    p = o + _finite(t)[:, None] * d
    axis = np.argmax(np.abs(p), axis=1)
    normal = np.zeros_like(p)
    rows = np.arange(p.shape[0])
    normal[rows, axis] = np.sign(p[rows, axis])
    return t, normal


def _hit_cylinder(o: np.ndarray, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = d[:, 0] ** 2 + d[:, 2] ** 2
    b = 2.0 * (o[:, 0] * d[:, 0] + o[:, 2] * d[:, 2])
    c = o[:, 0] ** 2 + o[:, 2] ** 2 - 1.0
    t0, t1, real = _quadratic(a, b, c)
    real &= a > 1e-12

    candidates = []
    for ts in (t0, t1):
        y = o[:, 1] + ts * d[:, 1]
        candidates.append(np.where(real & (ts > _EPS) & (np.abs(y) <= 1.0), ts, np.inf))
    dy = _safe(d[:, 1])
    for cap in (-1.0, 1.0):
        ts = (cap - o[:, 1]) / dy
        x = o[:, 0] + ts * d[:, 0]
        z = o[:, 2] + ts * d[:, 2]
        candidates.append(np.where((ts > _EPS) & (x * x + z * z <= 1.0), ts, np.inf))

    stacked = np.stack(candidates, axis=1)
    pick = np.argmin(stacked, axis=1)
    t = stacked[np.arange(len(pick)), pick]
    p = o + _finite(t)[:, None] * d
    side = pick < 2
    normal = np.where(
        side[:, None],
        np.stack([p[:, 0], np.zeros_like(t), p[:, 2]], axis=1),
        np.stack([np.zeros_like(t), np.sign(p[:, 1]), np.zeros_like(t)], axis=1),
    )
    return t, normal


def _hit_plane_patch(o: np.ndarray, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    t = -o[:, 1] / _safe(d[:, 1])
    p = o + t[:, None] * d
    inside = (t > _EPS) & (np.abs(p[:, 0]) <= 1.0) & (np.abs(p[:, 2]) <= 1.0)
    t = np.where(inside, t, np.inf)
    normal = np.zeros_like(o)
    normal[:, 1] = 1.0
    return t, normal


def _torus_sdf(p: np.ndarray) -> np.ndarray:
    ring = np.sqrt(p[:, 0] ** 2 + p[:, 2] ** 2) - _TORUS_MAJOR
    return np.sqrt(ring**2 + p[:, 1] ** 2) - _TORUS_MINOR


def _hit_torus(o: np.ndarray, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Sphere tracing inside the unit bounding sphere; steps are in world t.
    a = np.sum(d * d, axis=1)
    b = 2.0 * np.sum(o * d, axis=1)
    c = np.sum(o * o, axis=1) - 1.0
    t0, t1, real = _quadratic(a, b, c)
    active = np.flatnonzero(real & (t1 > _EPS))
    t = np.full(o.shape[0], np.inf)

    speed = np.sqrt(a)
    march = np.maximum(t0[active], _EPS)
    exit_t = t1[active]
    for _ in range(_MARCH_STEPS):
        if active.size == 0:
            break
        p = o[active] + march[:, None] * d[active]
        dist = _torus_sdf(p)
        hit = dist < _MARCH_HIT
        t[active[hit]] = march[hit]
        march = march + dist / speed[active]
        keep = ~hit & (march < exit_t)
        active, march, exit_t = active[keep], march[keep], exit_t[keep]

    p = o + _finite(t)[:, None] * d
    rho = np.sqrt(p[:, 0] ** 2 + p[:, 2] ** 2)
    rho = np.where(rho > 1e-9, rho, 1e-9)
    k = (rho - _TORUS_MAJOR) / rho
    normal = np.stack([k * p[:, 0], p[:, 1], k * p[:, 2]], axis=1)
    return t, normal


def _hit_local(shape: str, o: np.ndarray, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ray parameter and local-space normal (or gradient) for a unit primitive."""
    if shape == "sphere":
        t, p = _hit_sphere(o, d)
        return t, p
    if shape == "box":
        return _hit_box(o, d)
    if shape == "cylinder":
        return _hit_cylinder(o, d)
    if shape == "plane_patch":
        return _hit_plane_patch(o, d)
    if shape == "torus":
        return _hit_torus(o, d)
    raise ConfigurationError(f"Unknown shape: {shape}.")


def _background_hit(
    origins: np.ndarray, dirs: np.ndarray, room: tuple[float, float, float]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exit distance, face index and inward normal of rays leaving the room box."""
    width, height, depth = room
    lo = np.array([-width / 2.0, 0.0, -depth / 2.0])
    hi = np.array([width / 2.0, height, depth / 2.0])
    d = _safe(dirs)
    t_axis = np.where(d > 0.0, (hi - origins) / d, (lo - origins) / d)
    axis = np.argmin(t_axis, axis=1)
    rows = np.arange(len(axis))
    t = t_axis[rows, axis]
    positive = dirs[rows, axis] > 0.0
    face = 2 * axis + positive.astype(np.int64)
    normal = np.zeros_like(dirs)
    normal[rows, axis] = np.where(positive, -1.0, 1.0)
    return t, face, normal


def _occluded(
    points: np.ndarray, to_light: np.ndarray, distance: np.ndarray, objects: list[_Prepared]
) -> np.ndarray:
    blocked = np.zeros(points.shape[0], dtype=bool)
    for obj in objects:
        todo = np.flatnonzero(~blocked)
        if todo.size == 0:
            break
        todo = todo[obj.candidates(points[todo], to_light[todo], distance[todo])]
        if todo.size == 0:
            continue
        o_l, d_l = obj.to_local(points[todo], to_light[todo])
        t, _ = _hit_local(obj.shape, o_l, d_l)
        blocked[todo] |= t < distance[todo] - _SHADOW_BIAS
    return blocked


def _trace(
    origins: np.ndarray,
    dirs: np.ndarray,
    scene: SceneSpec,
    objects: list[_Prepared],
    backgrounds: dict[str, Material],
) -> np.ndarray:
    n = origins.shape[0]
    best_t = np.full(n, np.inf)
    best_obj = np.full(n, -1, dtype=np.int64)
    normal = np.zeros((n, 3))
    tex_point = np.zeros((n, 3))

    for k, obj in enumerate(objects):
        idx = obj.candidates(origins, dirs, best_t)
        if idx.size == 0:
            continue
        o_l, d_l = obj.to_local(origins[idx], dirs[idx])
        t, n_l = _hit_local(obj.shape, o_l, d_l)
        closer = t < best_t[idx]
        if not np.any(closer):
            continue
        rows = idx[closer]
        best_t[rows] = t[closer]
        best_obj[rows] = k
        normal[rows] = obj.normal_to_world(n_l[closer])
        tex_point[rows] = o_l[closer] + t[closer, None] * d_l[closer]

    t_bg, face, n_bg = _background_hit(origins, dirs, scene.room_size)
    on_bg = best_t >= t_bg
    t_hit = np.where(on_bg, t_bg, best_t)
    points = origins + t_hit[:, None] * dirs
    normal[on_bg] = n_bg[on_bg]
    # Wall textures are evaluated half a unit inside the room, off the lattice boundary.
    tex_point[on_bg] = points[on_bg] + 0.5 * n_bg[on_bg]

    # Two-sided surfaces: normals face the viewer.
    flip = np.sum(normal * dirs, axis=1) > 0.0
    normal[flip] *= -1.0

    albedo = np.zeros((n, 3))
    roughness = np.ones(n)
    for k, obj in enumerate(objects):
        mask = ~on_bg & (best_obj == k)
        if np.any(mask):
            albedo[mask] = textures.evaluate(obj.material, tex_point[mask])
            roughness[mask] = obj.material.roughness
    for idx, placement in enumerate(_FACES):
        mask = on_bg & (face == idx)
        if np.any(mask):
            material = backgrounds[placement]
            albedo[mask] = textures.evaluate(material, tex_point[mask])
            roughness[mask] = material.roughness

    light = np.zeros((n, 3))
    for lamp in scene.lights:
        tint = lamp.intensity * np.asarray(lamp.color, dtype=np.float64)
        if lamp.kind == "ambient":
            light += tint
            continue
        to_light = np.asarray(lamp.position, dtype=np.float64) - points
        distance = np.linalg.norm(to_light, axis=1)
        l_dir = to_light / np.maximum(distance, 1e-9)[:, None]
        n_dot_l = np.sum(normal * l_dir, axis=1)
        lit = np.flatnonzero(n_dot_l > 0.0)
        if lit.size == 0:
            continue
        shadow_origin = points[lit] + normal[lit] * _SHADOW_BIAS
        visible = ~_occluded(shadow_origin, l_dir[lit], distance[lit], objects)
        lit = lit[visible]

        half = _normalize(l_dir[lit] - dirs[lit])
        rough = roughness[lit]
        shininess = 8.0 + 120.0 * (1.0 - rough)
        spec = np.maximum(np.sum(normal[lit] * half, axis=1), 0.0) ** shininess
        lobe = rough * n_dot_l[lit] + (1.0 - rough) * spec
        falloff = 1.0 / (1.0 + _ATTENUATION * distance[lit] ** 2)
        light[lit] += (lobe * falloff)[:, None] * tint

    return albedo * light


def _check_inside(scene: SceneSpec) -> None:
    width, height, depth = scene.room_size
    x, y, z = scene.camera.position
    if not (abs(x) < width / 2.0 and 0.0 < y < height and abs(z) < depth / 2.0):
        raise ConfigurationError(f"Camera at {scene.camera.position} is outside the room {scene.room_size}.")


def render(spec: SceneSpec) -> RgbImage:
    """
    Render a scene to a noise-free linear-light RGB frame.

    Ray casting over analytic primitives inside the box room, Lambertian +
    Blinn-Phong shading, hard shadows from point lights and a fixed
    supersampling pattern. The result is a pure function of `spec`.
    When the camera sets an exposure target the frame is scaled so its
    99th-percentile luma meets it, before clamping.

    Parameters
    ----------
    spec : SceneSpec
        Scene to render.

    Returns
    -------
    RgbImage
        Frame of the camera's resolution, clamped to [0, 1].
    """
    _check_inside(spec)
    started = time.perf_counter()
    camera = spec.camera
    objects = [_Prepared.from_instance(obj) for obj in spec.objects]
    backgrounds = {region.placement: region.material for region in spec.background}
    missing = set(BACKGROUND_PLACEMENTS) - set(backgrounds)
    if missing:
        raise ConfigurationError(f"Background regions missing: {sorted(missing)}.")

    total = np.zeros((camera.height * camera.width, 3))
    offsets = subpixel_offsets(camera.samples_per_pixel)
    for offset in offsets:
        origins, dirs = camera_rays(camera, (float(offset[0]), float(offset[1])))
        for start in range(0, origins.shape[0], _CHUNK):
            stop = start + _CHUNK
            total[start:stop] += _trace(origins[start:stop], dirs[start:stop], spec, objects, backgrounds)

    frame = np.nan_to_num(total / len(offsets), nan=0.0, posinf=1.0, neginf=0.0)
    if camera.exposure is not None:
        level = float(np.percentile(frame @ LUMA_WEIGHTS, _EXPOSURE_PERCENTILE))
        if level > 0.0:
            frame = frame * (camera.exposure / level)
    frame = frame.reshape(camera.height, camera.width, 3)
    logger.debug(
        "Rendered scene %d (%dx%d, %d spp) in %.2fs",
        spec.scene_id,
        camera.width,
        camera.height,
        len(offsets),
        time.perf_counter() - started,
    )
    return RgbImage.from_array(frame, clamp=True)
