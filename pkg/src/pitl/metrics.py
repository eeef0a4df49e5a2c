"""Scalar attack measures: L1 depth objective and object presence rate.

Both are restricted to the attack region R. The objective is what the
optimizer minimizes; the presence rate is the reported effect size
(1 = object fully present, 0 = vanished, >1 possible on overshoot past the
original depth and deliberately not clamped).
"""

from __future__ import annotations

import numpy as np

from .scene import DegenerateSceneError, DepthMap, RegionMask

__all__ = ["objective", "presence_rate"]


def _check_same_shape(region: RegionMask, *maps: DepthMap) -> None:
    shape = (region.height, region.width)
    for dm in maps:
        if dm.values.shape != shape:
            raise ValueError(f"depth map shape {dm.values.shape} != region {shape}")


def objective(d_est: DepthMap, d_tgt: DepthMap, region: RegionMask) -> float:
    """Sum of absolute depth differences over the region pixels.

    Zero iff the estimate matches the target everywhere on R; pixels outside
    R contribute nothing.
    """
    _check_same_shape(region, d_est, d_tgt)
    diff = np.abs(d_est.values - d_tgt.values)
    return float(diff[region.member].sum())


def presence_rate(
    d_est: DepthMap,
    d_orig: DepthMap,
    d_back: DepthMap,
    region: RegionMask,
) -> float:
    """Mean over R of |d_est - d_back| / |d_orig - d_back|.

    Every region pixel must separate object from background
    (|d_orig - d_back| > 0); scenes are validated for this at load time and
    the check is repeated here because the function is usable standalone.
    """
    _check_same_shape(region, d_est, d_orig, d_back)
    member = region.member
    denom = np.abs(d_orig.values - d_back.values)[member]
    if np.any(denom == 0):
        bad = int(np.count_nonzero(denom == 0))
        raise DegenerateSceneError(
            f"{bad} region pixel(s) have identical object and background depth"
        )
    num = np.abs(d_est.values - d_back.values)[member]
    return float(np.mean(num / denom))
