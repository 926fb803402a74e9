"""Color/depth frame loading with [-1, 1] normalization.

Color frames are 8-bit 3-channel PNGs mapped linearly 0..255 -> [-1, 1].
Depth frames are 16-bit single-channel PNGs in integer millimeters mapped
linearly [near, far] -> [-1, 1] with clamping; a stored value of zero marks
an invalid (hole) pixel. One quantization step is 2/255 for color and
2/(far - near) per millimeter for depth.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError


@dataclass
class DepthRaster:
    """Normalized depth values (H, W) float32 in [-1, 1] plus a validity mask."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float32)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.shape != self.valid.shape or self.values.ndim != 2:
            raise FormatError("depth values and validity mask must share an (H, W) shape")

    @property
    def shape(self):
        return self.values.shape


@dataclass
class RgbdFrame:
    """Paired color (3, H, W) and depth rasters in normalized range."""

    color: np.ndarray
    depth: DepthRaster

    def __post_init__(self) -> None:
        self.color = np.asarray(self.color, dtype=np.float32)
        if self.color.ndim != 3 or self.color.shape[0] != 3:
            raise FormatError(f"color must have shape (3, H, W), got {self.color.shape}")
        if self.color.shape[1:] != self.depth.shape:
            raise FormatError(
                f"color {self.color.shape[1:]} and depth {self.depth.shape} sizes differ"
            )


def load_color(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    return (arr / 127.5 - 1.0).transpose(2, 0, 1)


def save_color(path: str | Path, color: np.ndarray) -> None:
    color = np.asarray(color, dtype=np.float64)
    if color.ndim != 3 or color.shape[0] != 3:
        raise FormatError(f"color must have shape (3, H, W), got {color.shape}")
    bytes_ = np.clip(np.round((color + 1.0) * 127.5), 0, 255).astype(np.uint8)
    Image.fromarray(bytes_.transpose(1, 2, 0), mode="RGB").save(path)


def decode_depth(raw: np.ndarray, near: float, far: float) -> DepthRaster:
    if not near < far:
        raise FormatError(f"near must be < far, got {near} >= {far}")
    raw = np.asarray(raw)
    valid = raw > 0
    norm = 2.0 * (raw.astype(np.float64) - near) / (far - near) - 1.0
    values = np.clip(norm, -1.0, 1.0).astype(np.float32)
    values[~valid] = 0.0
    return DepthRaster(values=values, valid=valid)


def encode_depth(depth: DepthRaster, near: float, far: float) -> np.ndarray:
    if not near < far:
        raise FormatError(f"near must be < far, got {near} >= {far}")
    mm = near + (depth.values.astype(np.float64) + 1.0) * 0.5 * (far - near)
    codes = np.round(mm).astype(np.int64)
    codes = np.clip(codes, 1, 65535)  # 0 is reserved for invalid pixels
    codes[~depth.valid] = 0
    return codes.astype(np.uint16)


def load_depth(path: str | Path, near: float, far: float) -> DepthRaster:
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.ndim != 2:
        raise FormatError(f"{Path(path).name}: depth image must be single-channel")
    return decode_depth(arr.astype(np.uint32), near, far)


def save_depth(path: str | Path, depth: DepthRaster, near: float, far: float) -> None:
    codes = encode_depth(depth, near, far)
    Image.fromarray(codes).save(path)  # uint16 -> 16-bit grayscale PNG


def load_rgbd(color_path: str | Path, depth_path: str | Path, near: float, far: float) -> RgbdFrame:
    color = load_color(color_path)
    depth = load_depth(depth_path, near, far)
    if color.shape[1:] != depth.shape:
        raise FormatError(
            f"size mismatch between color {color.shape[1:]} and depth {depth.shape}"
        )
    return RgbdFrame(color=color, depth=depth)
