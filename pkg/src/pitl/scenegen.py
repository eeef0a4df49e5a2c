"""Synthetic desk-scale scenes for verification runs.

Presets sketch three indoor targets: a tall bright locker, a low kitchen
stove, and a sofa whose armrests sit outside the attack region. Geometry
is flat (reflectance + two depth planes + seeded texture); the point is a
scene with a well-conditioned presence rate and a known layout, not
realism. Generation is fully deterministic from the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import DepthMap, RegionMask, SceneModel

__all__ = ["PRESETS", "GeneratedScene", "generate_scene"]

MIN_SIZE = 16


@dataclass
class GeneratedScene:
    reflectance: np.ndarray
    depth_orig: np.ndarray
    depth_back: np.ndarray
    region_mask: np.ndarray
    patch_weights: np.ndarray
    patch_bias: float
    ambient: float
    noise_stddev: float
    cell_grid: tuple

    def to_scene_model(self) -> SceneModel:
        scene = SceneModel(
            reflectance=self.reflectance,
            ambient=self.ambient,
            depth_orig=DepthMap(self.depth_orig),
            depth_back=DepthMap(self.depth_back),
            region=RegionMask(self.region_mask, *self.cell_grid),
            noise_stddev=self.noise_stddev,
        )
        scene.validate()
        return scene


def _texture(rng: np.random.Generator, shape, amplitude: float) -> np.ndarray:
    return rng.uniform(-amplitude, amplitude, shape)


def _paint(img, sl_y, sl_x, color, rng, amplitude=0.02):
    block = np.empty((sl_y.stop - sl_y.start, sl_x.stop - sl_x.start, 3))
    block[:] = color
    block += _texture(rng, block.shape, amplitude)
    img[sl_y, sl_x] = block


def _locker(size: int, rng: np.random.Generator) -> GeneratedScene:
    s = size
    refl = np.empty((s, s, 3))
    refl[:] = (0.55, 0.58, 0.62)  # wall
    refl += _texture(rng, refl.shape, 0.02)
    floor_top = int(s * 0.80)
    _paint(refl, slice(floor_top, s), slice(0, s), (0.45, 0.36, 0.30), rng)

    # bright near-white locker; the attack region must stay high-luminance
    # so that a saturated projection can nearly erase the depth contrast
    y0, y1 = int(s * 0.20), int(s * 0.85)
    x0, x1 = int(s * 0.28), int(s * 0.72)
    _paint(refl, slice(y0, y1), slice(x0, x1), (0.94, 0.94, 0.93), rng, amplitude=0.015)
    seam = (x0 + x1) // 2
    refl[y0:y1, seam] = (0.86, 0.86, 0.85)

    depth_back = np.full((s, s), 4.0)
    rows = np.arange(floor_top, s)
    frac = (rows - floor_top) / max(s - floor_top, 1)
    depth_back[floor_top:] = (4.0 - 0.9 * frac)[:, None]  # floor slopes toward the camera
    depth_orig = depth_back.copy()
    depth_orig[y0:y1, x0:x1] = 2.0

    region = np.zeros((s, s), dtype=bool)
    region[y0 + 1 : y1 - 1, x0 + 1 : x1 - 1] = True
    return GeneratedScene(
        reflectance=np.clip(refl, 0.0, 1.0),
        depth_orig=depth_orig,
        depth_back=depth_back,
        region_mask=region,
        patch_weights=np.zeros((5, 5, 3)),
        patch_bias=0.0,
        ambient=0.4,
        noise_stddev=0.01,
        cell_grid=(4, 4),
    )


def _stove(size: int, rng: np.random.Generator) -> GeneratedScene:
    s = size
    refl = np.empty((s, s, 3))
    refl[:] = (0.62, 0.60, 0.58)  # kitchen wall
    refl += _texture(rng, refl.shape, 0.02)
    counter_top = int(s * 0.78)
    _paint(refl, slice(counter_top, s), slice(0, s), (0.50, 0.47, 0.44), rng)

    # low, wide stainless body with darker burner disks
    y0, y1 = int(s * 0.55), int(s * 0.80)
    x0, x1 = int(s * 0.18), int(s * 0.82)
    _paint(refl, slice(y0, y1), slice(x0, x1), (0.72, 0.73, 0.75), rng)
    yy, xx = np.mgrid[0:s, 0:s]
    for cx in (0.32, 0.5, 0.68):
        r = max(s * 0.035, 1.5)
        disk = (yy - int(s * 0.62)) ** 2 + (xx - int(s * cx)) ** 2 <= r * r
        refl[disk] = (0.28, 0.28, 0.30)

    depth_back = np.full((s, s), 3.4)
    depth_orig = depth_back.copy()
    depth_orig[y0:y1, x0:x1] = 2.3

    region = np.zeros((s, s), dtype=bool)
    region[y0 + 1 : y1 - 1, x0 + 1 : x1 - 1] = True
    return GeneratedScene(
        reflectance=np.clip(refl, 0.0, 1.0),
        depth_orig=depth_orig,
        depth_back=depth_back,
        region_mask=region,
        patch_weights=np.zeros((5, 5, 3)),
        patch_bias=0.0,
        ambient=0.4,
        noise_stddev=0.01,
        cell_grid=(3, 6),
    )


def _sofa(size: int, rng: np.random.Generator) -> GeneratedScene:
    s = size
    refl = np.empty((s, s, 3))
    refl[:] = (0.58, 0.56, 0.52)  # living-room wall
    refl += _texture(rng, refl.shape, 0.02)
    floor_top = int(s * 0.82)
    _paint(refl, slice(floor_top, s), slice(0, s), (0.42, 0.34, 0.28), rng)

    # backrest + seat, flanked by armrests that stay outside the region
    back_y0, back_y1 = int(s * 0.42), int(s * 0.58)
    seat_y1 = int(s * 0.84)
    x0, x1 = int(s * 0.15), int(s * 0.85)
    arm_w = max(int(s * 0.07), 2)
    fabric = (0.55, 0.42, 0.35)
    _paint(refl, slice(back_y0, seat_y1), slice(x0, x1), fabric, rng, amplitude=0.03)

    depth_back = np.full((s, s), 4.2)
    depth_orig = depth_back.copy()
    depth_orig[back_y0:seat_y1, x0:x1] = 2.6

    body = np.zeros((s, s), dtype=bool)
    body[back_y0 + 1 : seat_y1 - 1, x0 + 1 : x1 - 1] = True
    body[:, x0 : x0 + arm_w] = False  # left armrest not perturbed
    body[:, x1 - arm_w : x1] = False  # right armrest not perturbed
    return GeneratedScene(
        reflectance=np.clip(refl, 0.0, 1.0),
        depth_orig=depth_orig,
        depth_back=depth_back,
        region_mask=body,
        patch_weights=np.zeros((5, 5, 3)),
        patch_bias=0.0,
        ambient=0.4,
        noise_stddev=0.01,
        cell_grid=(4, 8),
    )


PRESETS = {
    "locker": _locker,
    "stove": _stove,
    "sofa": _sofa,
}


def generate_scene(preset: str, size: int, seed: int) -> GeneratedScene:
    """Build a preset scene; deterministic for a given (preset, size, seed)."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}, expected one of {sorted(PRESETS)}")
    if size < MIN_SIZE:
        raise ValueError(f"size must be >= {MIN_SIZE}, got {size}")
    rng = np.random.Generator(np.random.PCG64(seed))
    generated = PRESETS[preset](size, rng)
    # patch-victim weights ride along so patch_linear runs reproduce exactly
    weights = rng.normal(0.0, 0.2, (5, 5, 3))
    bias = float(rng.normal(0.0, 0.25))
    generated.patch_weights = weights
    generated.patch_bias = bias
    generated.to_scene_model()  # raises if the preset produced a degenerate scene
    return generated
