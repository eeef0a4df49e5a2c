"""Depth-estimation backends served by the adapter.

Every backend maps an (H, W, 3) float image in [0, 1] to an (H, W)
non-negative depth array and declares its size limits plus the depth scale
its outputs live on (relative-depth networks are min-max normalized onto
[0, depth_scale], reported in the hello reply so callers can interpret
presence-rate denominators).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import pfmio

LUMA = np.array([0.2126, 0.7152, 0.0722])


class BackendError(RuntimeError):
    """Estimation failed for one request; the serve loop keeps running."""


class MockBrightnessBackend:
    """Brightness-biased analytic estimator, no ML dependencies.

    With a scene bundle the depth maps and object mask come from disk and
    requests must match those dimensions exactly. Without one, a synthetic
    scene (object at 2.0 in front of a 4.0 background, centered box mask)
    is generated for whatever size the request has.
    """

    deterministic = True

    def __init__(self, scene_dir: str | None = None, gain: float = 1.0):
        self.gain = float(gain)
        self.depth_scale = 4.0
        if scene_dir is None:
            self.name = "mock-brightness"
            self.max_width = self.max_height = 4096
            self._fixed = None
        else:
            base = Path(scene_dir)
            depth_orig = pfmio.read_pfm(base / "depth_orig.pfm")
            depth_back = pfmio.read_pfm(base / "depth_back.pfm")
            mask = depth_orig != depth_back  # object footprint
            self._fixed = (depth_orig, depth_back, mask)
            self.name = f"mock-brightness:{base.name}"
            self.max_height, self.max_width = depth_orig.shape
            self.depth_scale = float(max(depth_orig.max(), depth_back.max()))

    def _maps(self, h: int, w: int):
        if self._fixed is not None:
            depth_orig, depth_back, mask = self._fixed
            if depth_orig.shape != (h, w):
                raise BackendError(
                    f"scene-backed mock needs {depth_orig.shape[1]}x{depth_orig.shape[0]} images, got {w}x{h}"
                )
            return depth_orig, depth_back, mask
        depth_orig = np.full((h, w), 4.0)
        mask = np.zeros((h, w), dtype=bool)
        mask[h // 4 : h - h // 4, w // 4 : w - w // 4] = True
        depth_orig[mask] = 2.0
        return depth_orig, np.full((h, w), 4.0), mask

    def estimate(self, pixels: np.ndarray) -> np.ndarray:
        h, w = pixels.shape[:2]
        depth_obj, depth_back, mask = self._maps(h, w)
        lum = np.clip(pixels @ LUMA, 0.0, 1.0)
        biased = depth_obj + self.gain * (depth_back - depth_obj) * lum
        return np.maximum(np.where(mask, biased, depth_back), 0.0)


class RandomCnnBackend:
    """Small untrained convolutional network producing relative depth.

    Useful as an offline stand-in for a real checkpoint: exercises the full
    tensor path (torch inference, normalization, serialization) with seeded,
    reproducible weights.
    """

    deterministic = True

    def __init__(self, seed: int = 0, depth_scale: float = 10.0, device: str = "cpu"):
        import torch  # heavyweight; imported only when this backend is chosen

        self._torch = torch
        torch.manual_seed(seed)
        self.net = torch.nn.Sequential(
            torch.nn.Conv2d(3, 8, 3, padding=1),
            torch.nn.ReLU(),
            torch.nn.Conv2d(8, 8, 3, padding=1),
            torch.nn.ReLU(),
            torch.nn.Conv2d(8, 1, 3, padding=1),
        ).to(device)
        self.net.eval()
        self.device = device
        self.name = f"random-cnn(seed={seed})"
        self.max_width = self.max_height = 512
        self.depth_scale = float(depth_scale)

    def estimate(self, pixels: np.ndarray) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            x = torch.from_numpy(np.ascontiguousarray(pixels, dtype=np.float32))
            x = x.permute(2, 0, 1).unsqueeze(0).to(self.device)
            raw = self.net(x)[0, 0].cpu().numpy().astype(np.float64)
        return _normalize_relative(raw, self.depth_scale)


class HfDepthBackend:
    """Published relative-depth checkpoint served through transformers."""

    deterministic = True

    def __init__(self, model_id: str, depth_scale: float = 10.0, device: str = "cpu"):
        try:
            from transformers import pipeline
        except ImportError as exc:
            raise BackendError(f"transformers not installed: {exc}") from exc
        try:
            self.pipe = pipeline("depth-estimation", model=model_id, device=device)
        except Exception as exc:
            raise BackendError(f"cannot load model {model_id!r}: {exc}") from exc
        self.name = model_id
        self.max_width = self.max_height = 1024
        self.depth_scale = float(depth_scale)

    def estimate(self, pixels: np.ndarray) -> np.ndarray:
        from PIL import Image

        h, w = pixels.shape[:2]
        img = Image.fromarray(np.rint(np.clip(pixels, 0, 1) * 255).astype(np.uint8))
        out = self.pipe(img)
        depth = np.asarray(out["predicted_depth"].squeeze().cpu().numpy(), dtype=np.float64)
        if depth.shape != (h, w):
            img_depth = Image.fromarray(depth.astype(np.float32), mode="F").resize((w, h), Image.BILINEAR)
            depth = np.asarray(img_depth, dtype=np.float64)
        return _normalize_relative(depth, self.depth_scale)


def _normalize_relative(raw: np.ndarray, scale: float) -> np.ndarray:
    """Min-max normalize a relative-depth map onto [0, scale]."""
    raw = np.where(np.isfinite(raw), raw, 0.0)
    lo, hi = float(raw.min()), float(raw.max())
    if hi - lo < 1e-12:
        return np.zeros_like(raw)
    return (raw - lo) / (hi - lo) * scale
