"""Middlebury .flo optical-flow files.

Layout: float32 magic 202021.25, little-endian int32 width and height, then
height*width interleaved (dx, dy) float32 pairs in row-major order. In
memory a flow field is a (2, H, W) float32 array with components in pixels.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

FLO_MAGIC = 202021.25


def read_flow(path: str | Path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12:
        raise FormatError(f"{path.name}: truncated header ({len(raw)} bytes, expected >= 12)")
    magic = struct.unpack("<f", raw[:4])[0]
    if magic != np.float32(FLO_MAGIC):
        raise FormatError(f"{path.name}: not a .flo file (magic {magic!r})")
    width, height = struct.unpack("<ii", raw[4:12])
    if width <= 0 or height <= 0:
        raise FormatError(f"{path.name}: bad dimensions {width}x{height}")
    expected = 12 + width * height * 2 * 4
    if len(raw) != expected:
        raise FormatError(
            f"{path.name}: truncated payload, expected {expected} bytes, got {len(raw)}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=12).reshape(height, width, 2)
    return np.ascontiguousarray(data.transpose(2, 0, 1))


def write_flow(path: str | Path, flow: np.ndarray) -> None:
    flow = np.asarray(flow, dtype=np.float32)
    if flow.ndim != 3 or flow.shape[0] != 2:
        raise FormatError(f"flow must have shape (2, H, W), got {flow.shape}")
    _, height, width = flow.shape
    interleaved = np.ascontiguousarray(flow.transpose(1, 2, 0)).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<f", FLO_MAGIC))
        fh.write(struct.pack("<ii", width, height))
        fh.write(interleaved.tobytes())
