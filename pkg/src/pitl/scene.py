"""Simulated projection environment.

Stands in for the physical projector/camera loop: a perturbation pattern is
rasterized to a per-pixel light field over the attack region, composited
with the scene reflectance under a brighten-only model, and returned as a
noisy captured image. The compositing model is

    pixels = clamp(reflectance * clamp(ambient + light, 0, 1) + noise, 0, 1)

i.e. projected light can only add to the ambient illumination (a projector
cannot darken a surface), its effect saturates, and the object's own
reflectance always multiplies through, so the surface color is never fully
overridden.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

__all__ = [
    "DepthMap",
    "RegionMask",
    "PerturbationPattern",
    "SceneModel",
    "CapturedImage",
    "DegenerateSceneError",
    "pattern_to_light",
    "compose_projection",
]


class DegenerateSceneError(ValueError):
    """Scene cannot support the presence-rate metric (zero denominator)."""


@dataclass
class DepthMap:
    """Per-pixel depth in consistent (arbitrary) distance units, finite and >= 0."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"depth map must be 2-D, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("depth map contains non-finite values")
        if np.any(self.values < 0):
            raise ValueError("depth map contains negative values")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class RegionMask:
    """Attack region R plus its projection-cell partition.

    `member` marks pixels of R. The bounding box of R is split into a
    rows x cols grid of equal cells; each member pixel belongs to exactly
    one cell. With a per-pixel grid over a rectangular R this reduces to
    one cell per pixel (n = 3|R|).
    """

    member: np.ndarray
    cell_rows: int
    cell_cols: int
    _cell_index: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.member = np.asarray(self.member, dtype=bool)
        if self.member.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {self.member.shape}")
        if self.cell_rows < 1 or self.cell_cols < 1:
            raise ValueError("cell grid must be at least 1x1")
        self.pixel_count = int(self.member.sum())
        if self.pixel_count < 1:
            raise ValueError("region must contain at least one pixel")
        ys, xs = np.nonzero(self.member)
        self.bbox = (int(ys.min()), int(ys.max()) + 1, int(xs.min()), int(xs.max()) + 1)
        y0, y1, x0, x1 = self.bbox
        rows_of = (np.arange(self.member.shape[0]) - y0) * self.cell_rows // max(y1 - y0, 1)
        cols_of = (np.arange(self.member.shape[1]) - x0) * self.cell_cols // max(x1 - x0, 1)
        # flat cell id per pixel; only meaningful where member is true
        cell = rows_of[:, None] * self.cell_cols + cols_of[None, :]
        self._cell_index = np.clip(cell, 0, self.cell_rows * self.cell_cols - 1)

    @property
    def height(self) -> int:
        return self.member.shape[0]

    @property
    def width(self) -> int:
        return self.member.shape[1]

    @property
    def dimension(self) -> int:
        """Optimizer dimension n = 3 * rows * cols."""
        return 3 * self.cell_rows * self.cell_cols

    def cell_of_pixels(self) -> np.ndarray:
        """(H, W) flat cell index; valid at member pixels."""
        return self._cell_index


@dataclass
class PerturbationPattern:
    """Decision vector delta: per-cell RGB projector intensities.

    Values are unconstrained in optimizer space; they are clamped to [0, 1]
    only when rasterized to light (`pattern_to_light`).
    """

    cells: np.ndarray
    region: RegionMask

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.float64)
        expected = (self.region.cell_rows, self.region.cell_cols, 3)
        if self.cells.shape != expected:
            raise ValueError(f"cells shape {self.cells.shape} does not match grid {expected}")

    @classmethod
    def from_vector(cls, region: RegionMask, vector: np.ndarray) -> "PerturbationPattern":
        vector = np.asarray(vector, dtype=np.float64).reshape(-1)
        if vector.size != region.dimension:
            raise ValueError(f"vector has {vector.size} entries, region needs {region.dimension}")
        return cls(vector.reshape(region.cell_rows, region.cell_cols, 3), region)

    def to_vector(self) -> np.ndarray:
        return self.cells.reshape(-1).copy()


@dataclass
class CapturedImage:
    """Camera output: (H, W, 3) values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"image must be (H, W, 3), got {self.pixels.shape}")
        if np.any(self.pixels < 0) or np.any(self.pixels > 1):
            raise ValueError("image values must lie in [0, 1]")


@dataclass
class SceneModel:
    """Everything the simulated projector/camera needs.

    reflectance: (H, W, 3) in [0, 1]; ambient: scalar or (H, W, 3);
    depth_orig has the target object present, depth_back is background only.
    """

    reflectance: np.ndarray
    ambient: Union[float, np.ndarray]
    depth_orig: DepthMap
    depth_back: DepthMap
    region: RegionMask
    noise_stddev: float = 0.01

    def __post_init__(self):
        self.reflectance = np.asarray(self.reflectance, dtype=np.float64)

    def validate(self) -> None:
        """Check shapes and the presence-rate denominator on every region pixel."""
        h, w = self.reflectance.shape[:2]
        if self.reflectance.ndim != 3 or self.reflectance.shape[2] != 3:
            raise ValueError(f"reflectance must be (H, W, 3), got {self.reflectance.shape}")
        for name, dm in (("depth_orig", self.depth_orig), ("depth_back", self.depth_back)):
            if dm.values.shape != (h, w):
                raise ValueError(f"{name} shape {dm.values.shape} != reflectance ({h}, {w})")
        if self.region.member.shape != (h, w):
            raise ValueError(f"region shape {self.region.member.shape} != reflectance ({h}, {w})")
        if isinstance(self.ambient, np.ndarray) and self.ambient.shape not in ((h, w, 3), ()):
            raise ValueError(f"ambient must be scalar or ({h}, {w}, 3), got {self.ambient.shape}")
        if self.noise_stddev < 0:
            raise ValueError("noise_stddev must be >= 0")
        diff = np.abs(self.depth_orig.values - self.depth_back.values)[self.region.member]
        if np.any(diff == 0):
            bad = int(np.count_nonzero(diff == 0))
            raise DegenerateSceneError(
                f"{bad} region pixel(s) have identical object and background depth; "
                "the presence rate is undefined there"
            )

    def benign_image(self) -> CapturedImage:
        """Noise-free capture with the projector off."""
        return compose_projection(self, None, rng=None, noise=False)


def pattern_to_light(pattern: PerturbationPattern) -> np.ndarray:
    """Rasterize a pattern to a (H, W, 3) light field.

    Member pixels receive their cell's intensity clamped to [0, 1]; pixels
    outside the region receive no light.
    """
    region = pattern.region
    clamped = np.clip(pattern.cells, 0.0, 1.0).reshape(-1, 3)
    light = np.zeros((region.height, region.width, 3), dtype=np.float64)
    member = region.member
    light[member] = clamped[region.cell_of_pixels()[member]]
    return light


def compose_projection(
    scene: SceneModel,
    pattern: Optional[PerturbationPattern],
    rng: Optional[np.random.Generator],
    noise: bool = True,
) -> CapturedImage:
    """Composite projected light into the scene and capture it.

    Brighten-only: light adds to ambient before an inner clamp at 1, then
    multiplies with reflectance. Gaussian camera noise (scene.noise_stddev)
    is added after compositing and before the final clamp; pass rng=None or
    noise=False for a noise-free capture.
    """
    if pattern is None:
        light = 0.0
    else:
        light = pattern_to_light(pattern)
    illumination = np.clip(scene.ambient + light, 0.0, 1.0)
    composite = scene.reflectance * illumination
    if noise and scene.noise_stddev > 0:
        if rng is None:
            raise ValueError("an rng is required when noise_stddev > 0")
        composite = composite + rng.normal(0.0, scene.noise_stddev, composite.shape)
    return CapturedImage(np.clip(composite, 0.0, 1.0))
