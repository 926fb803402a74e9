"""Deterministic raster kernels of the generator's forward pass.

Backward warping, occlusion masking, depth-dictionary combination, and the
coarse-to-fine pyramid composition. Everything here is a pure function of
its inputs; the learned quantities (flows, masks, magnitudes, dictionaries)
are supplied, never estimated.

Sampling conventions, stated once: backward warping samples the input at
``p + flow(p)`` with bilinear interpolation and clamp-to-edge behavior for
out-of-range coordinates. Upsampling is bilinear with the align-corners-
false grid, which preserves constants everywhere (edge clamping included).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import KernelError
from .motion import normalize_basis
from .tensorio import read_tensor, write_tensor

DEFAULT_DICTIONARY_SIZE = 5
PYRAMID_LEVELS = 6  # reference architecture; the kernels accept any level count


def _bilinear_gather(img: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Sample (..., H, W) rasters at fractional coords with edge clamping."""
    h, w = img.shape[-2:]
    x0f = np.floor(sx)
    y0f = np.floor(sy)
    tx = sx - x0f
    ty = sy - y0f
    # clamp the two taps independently so far-out-of-range coords collapse
    # onto the edge texel instead of blending edge and interior
    x0 = np.clip(x0f.astype(np.int64), 0, w - 1)
    x1 = np.clip(x0f.astype(np.int64) + 1, 0, w - 1)
    y0 = np.clip(y0f.astype(np.int64), 0, h - 1)
    y1 = np.clip(y0f.astype(np.int64) + 1, 0, h - 1)
    v00 = img[..., y0, x0]
    v01 = img[..., y0, x1]
    v10 = img[..., y1, x0]
    v11 = img[..., y1, x1]
    return (
        (1.0 - ty) * (1.0 - tx) * v00
        + (1.0 - ty) * tx * v01
        + ty * (1.0 - tx) * v10
        + ty * tx * v11
    )


def sample_bilinear(img: np.ndarray, x: float, y: float):
    """Bilinear sample of an (H, W) or (C, H, W) raster at a single point."""
    out = _bilinear_gather(np.asarray(img), np.asarray(float(x)), np.asarray(float(y)))
    return out


def backward_warp(feature: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """out(p) = feature sampled at p + flow(p).

    ``feature`` is (C, H, W) or (H, W); ``flow`` is (2, H, W) ordered (dx, dy).
    """
    feature = np.asarray(feature)
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[0] != 2:
        raise KernelError(f"flow must have shape (2, H, W), got {flow.shape}")
    if feature.shape[-2:] != flow.shape[-2:]:
        raise KernelError(
            f"feature {feature.shape[-2:]} and flow {flow.shape[-2:]} sizes differ"
        )
    h, w = flow.shape[-2:]
    gx = np.arange(w, dtype=flow.dtype)[None, :] + flow[0]
    gy = np.arange(h, dtype=flow.dtype)[:, None] + flow[1]
    return _bilinear_gather(feature, gx, gy)


def apply_mask(warped: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Elementwise product with a [0, 1] occlusion mask, broadcast over channels."""
    warped = np.asarray(warped)
    mask = np.asarray(mask)
    if mask.ndim == 3 and mask.shape[0] == 1:
        mask = mask[0]
    if mask.ndim != 2:
        raise KernelError(f"mask must be (H, W) or (1, H, W), got {mask.shape}")
    if mask.shape != warped.shape[-2:]:
        raise KernelError(f"mask {mask.shape} and feature {warped.shape[-2:]} sizes differ")
    if mask.size and (mask.min() < 0.0 or mask.max() > 1.0):
        raise KernelError("mask values must lie in [0, 1]")
    return warped * mask


@dataclass
class DepthMotionDictionary:
    """Per-pyramid-level orthonormal bases for motion in the depth field.

    ``levels[i]`` has shape (M, C, H, W): M basis maps matching the level's
    feature-map shape. Bases are orthonormal under the flattened inner
    product; mildly off bases are corrected at load, bad ones rejected.
    """

    levels: list

    def __post_init__(self) -> None:
        if not self.levels:
            raise KernelError("depth motion dictionary needs at least one level")
        fixed = []
        size = None
        for i, lvl in enumerate(self.levels):
            lvl = np.asarray(lvl, dtype=np.float64)
            if lvl.ndim != 4:
                raise KernelError(
                    f"dictionary level {i} must be (M, C, H, W), got shape {lvl.shape}"
                )
            if size is None:
                size = lvl.shape[0]
            elif lvl.shape[0] != size:
                raise KernelError(
                    f"dictionary level {i} has {lvl.shape[0]} bases, expected {size}"
                )
            flat = normalize_basis(lvl.reshape(lvl.shape[0], -1), f"dictionary level {i}")
            fixed.append(flat.reshape(lvl.shape))
        self.levels = fixed

    @property
    def size(self) -> int:
        return self.levels[0].shape[0]

    @property
    def n_levels(self) -> int:
        return len(self.levels)


def load_dictionary_level(path: str | Path) -> np.ndarray:
    """One dictionary level from a tensor file, orthonormality enforced."""
    arr = read_tensor(path)
    if arr.ndim != 4:
        raise KernelError(f"dictionary level file must hold (M, C, H, W), got {arr.shape}")
    flat = normalize_basis(arr.reshape(arr.shape[0], -1), "dictionary level")
    return flat.reshape(arr.shape)


def save_dictionary_level(path: str | Path, level: np.ndarray) -> None:
    write_tensor(path, np.asarray(level), layout="MCHW", meta={"kind": "depth_motion_dictionary"})


def depth_motion_combine(
    masked: np.ndarray, magnitudes: np.ndarray, level: np.ndarray
) -> np.ndarray:
    """masked + sum_j magnitudes[j] * level[j]."""
    masked = np.asarray(masked)
    magnitudes = np.asarray(magnitudes, dtype=np.float64).reshape(-1)
    level = np.asarray(level)
    if level.ndim != 4:
        raise KernelError(f"dictionary level must be (M, C, H, W), got {level.shape}")
    if len(magnitudes) != level.shape[0]:
        raise KernelError(
            f"magnitude length {len(magnitudes)} != dictionary size {level.shape[0]}"
        )
    if level.shape[1:] != masked.shape:
        raise KernelError(
            f"dictionary maps {level.shape[1:]} do not match feature {masked.shape}"
        )
    return masked + np.tensordot(magnitudes, level, axes=1)


def upsample2x(feature: np.ndarray) -> np.ndarray:
    """Bilinear 2x upsampling, align-corners-false, edge-clamped."""
    feature = np.asarray(feature)
    h, w = feature.shape[-2:]
    sx = (np.arange(2 * w) + 0.5) / 2.0 - 0.5
    sy = (np.arange(2 * h) + 0.5) / 2.0 - 0.5
    gx, gy = np.meshgrid(sx, sy)
    return _bilinear_gather(feature, gx, gy)


def pyramid_refine(levels: list) -> np.ndarray:
    """Coarse-to-fine composition of decoded and inpainted maps.

    ``levels`` is ordered coarse to fine as (decoded, inpainted) pairs, each
    level doubling the previous resolution. The running result is upsampled
    2x and the level's decoded + inpainted maps are added; the finest sum is
    returned.
    """
    if not levels:
        raise KernelError("pyramid needs at least one level")
    out = None
    channels = None
    prev_hw = None
    for i, (decoded, inpainted) in enumerate(levels):
        decoded = np.asarray(decoded)
        inpainted = np.asarray(inpainted)
        if decoded.ndim != 3 or inpainted.ndim != 3:
            raise KernelError(f"level {i}: maps must be (C, H, W)")
        if decoded.shape != inpainted.shape:
            raise KernelError(
                f"level {i}: decoded {decoded.shape} and inpainted {inpainted.shape} differ"
            )
        if channels is None:
            channels = decoded.shape[0]
        elif decoded.shape[0] != channels:
            raise KernelError(
                f"level {i}: channel count {decoded.shape[0]} != {channels} of level 0"
            )
        hw = decoded.shape[1:]
        if prev_hw is not None and hw != (2 * prev_hw[0], 2 * prev_hw[1]):
            raise KernelError(
                f"level {i}: resolution {hw} does not double the previous {prev_hw}"
            )
        prev_hw = hw
        contribution = decoded + inpainted
        out = contribution if out is None else upsample2x(out) + contribution
    return out
