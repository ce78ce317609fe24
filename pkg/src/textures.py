from __future__ import annotations

import numpy as np

from .scene_gen import Material

_OCTAVES = 4


def _hash01(ix: np.ndarray, iy: np.ndarray, iz: np.ndarray, seed: int, salt: int = 0) -> np.ndarray:
    """Integer lattice hash mapped to [0, 1)."""
    with np.errstate(over="ignore"):
        h = (ix & 0xFFFFFFFF).astype(np.uint32) * np.uint32(0x8DA6B343)
        h ^= (iy & 0xFFFFFFFF).astype(np.uint32) * np.uint32(0xD8163841)
        h ^= (iz & 0xFFFFFFFF).astype(np.uint32) * np.uint32(0xCB1AB31F)
        h ^= np.uint32((seed ^ (salt * 0x9E3779B9)) & 0xFFFFFFFF)
        h ^= h >> np.uint32(16)
        h *= np.uint32(0x7FEB352D)
        h ^= h >> np.uint32(15)
        h *= np.uint32(0x846CA68B)
        h ^= h >> np.uint32(16)
    return h.astype(np.float64) / 4294967296.0


def _lattice(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cell = np.floor(points)
    return cell.astype(np.int64), points - cell


def _value_noise(points: np.ndarray, seed: int) -> np.ndarray:
    cell, frac = _lattice(points)
    fade = frac * frac * (3.0 - 2.0 * frac)
    result = np.zeros(points.shape[0])
    for dx in (0, 1):
        wx = fade[:, 0] if dx else 1.0 - fade[:, 0]
        for dy in (0, 1):
            wy = fade[:, 1] if dy else 1.0 - fade[:, 1]
            for dz in (0, 1):
                wz = fade[:, 2] if dz else 1.0 - fade[:, 2]
                corner = _hash01(cell[:, 0] + dx, cell[:, 1] + dy, cell[:, 2] + dz, seed)
                result += wx * wy * wz * corner
    return result


def _fbm(points: np.ndarray, seed: int) -> np.ndarray:
    total = np.zeros(points.shape[0])
    amplitude, norm = 1.0, 0.0
    for octave in range(_OCTAVES):
        total += amplitude * _value_noise(points * (2.0**octave), seed + octave)
        norm += amplitude
        amplitude *= 0.5
    return total / norm


def _voronoi_ids(points: np.ndarray, seed: int) -> np.ndarray:
    cell, _ = _lattice(points)
    best = np.full(points.shape[0], np.inf)
    best_id = np.zeros(points.shape[0])
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dz in (-1, 0, 1):
                cx, cy, cz = cell[:, 0] + dx, cell[:, 1] + dy, cell[:, 2] + dz
                feature = np.stack(
                    [
                        cx + _hash01(cx, cy, cz, seed, 1),
                        cy + _hash01(cx, cy, cz, seed, 2),
                        cz + _hash01(cx, cy, cz, seed, 3),
                    ],
                    axis=1,
                )
                dist = np.sum((points - feature) ** 2, axis=1)
                closer = dist < best
                best = np.where(closer, dist, best)
                best_id = np.where(closer, _hash01(cx, cy, cz, seed, 4), best_id)
    return best_id


def _axis(seed: int) -> np.ndarray:
    """Unit direction fixed by the material seed (stripe and gradient orientation)."""
    gen = np.random.Generator(np.random.Philox(key=seed))
    v = gen.normal(size=3)
    return v / np.linalg.norm(v)


def _ramp(palette: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Piecewise-linear blend through the palette for t in [0, 1]."""
    pos = np.clip(t, 0.0, 1.0) * (len(palette) - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, len(palette) - 1)
    w = (pos - lo)[:, None]
    return palette[lo] * (1.0 - w) + palette[hi] * w


def evaluate(material: Material, points: np.ndarray) -> np.ndarray:
    """
    Albedo of `material` at 3-D texture-space points.

    Parameters
    ----------
    material : Material
        Procedural material.
    points : np.ndarray
        Array of shape (M, 3); multiplied by the material's spatial scale.

    Returns
    -------
    np.ndarray
        Albedo of shape (M, 3) in [0, 1].
    """
    palette = np.asarray(material.palette, dtype=np.float64)
    n = len(palette)
    p = np.asarray(points, dtype=np.float64) * material.spatial_scale
    seed = material.pattern_seed
    kind = material.texture_kind

    if kind == "solid":
        return np.broadcast_to(palette[0], p.shape).copy()
    if kind == "checker":
        idx = np.floor(p).astype(np.int64).sum(axis=1) % n
        return palette[idx]
    if kind == "stripes":
        idx = np.floor(p @ _axis(seed)).astype(np.int64) % n
        return palette[idx]
    if kind == "value_noise":
        return _ramp(palette, _value_noise(p, seed))
    if kind == "multi_octave_noise":
        return _ramp(palette, _fbm(p, seed))
    if kind == "voronoi_cells":
        idx = np.minimum((_voronoi_ids(p, seed) * n).astype(np.int64), n - 1)
        return palette[idx]
    if kind == "linear_gradient":
        proj = p @ _axis(seed)
        return _ramp(palette, proj - np.floor(proj))
    raise ValueError(f"Unknown texture kind: {kind}.")
