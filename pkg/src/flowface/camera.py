"""Perspective camera: pixel/clip mapping, projection and unprojection.

Unprojection is the homogeneous product of the inverse perspective matrix
with ``(x_clip, y_clip, depth, 1)`` followed by the perspective divide. The
depth value is used directly as the clip-space z coordinate; how raster
files encode that value is the business of ``rgbd``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CameraError

# y_down: pixel y grows downward (image convention), clip y grows upward.
PIXEL_CONVENTIONS = ("y_down", "y_up")

_COND_LIMIT = 1e12
_W_EPS = 1e-12


@dataclass
class PerspectiveCamera:
    """4x4 perspective matrix plus image size and depth-encoding range.

    ``near``/``far`` describe how stored depth rasters map to the [-1, 1]
    values fed into projection math; they are carried here so every consumer
    of the camera decodes depth identically.
    """

    P: np.ndarray
    width: int
    height: int
    near: float
    far: float
    pixel_convention: str = "y_down"
    P_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.P = np.asarray(self.P, dtype=np.float64)
        if self.P.shape != (4, 4):
            raise CameraError(f"perspective matrix must be 4x4, got {self.P.shape}")
        if not np.isfinite(self.P).all():
            raise CameraError("perspective matrix has non-finite entries")
        if self.width <= 0 or self.height <= 0:
            raise CameraError("image size must be positive")
        if not self.near < self.far:
            raise CameraError(f"near must be < far, got {self.near} >= {self.far}")
        if self.pixel_convention not in PIXEL_CONVENTIONS:
            raise CameraError(f"unknown pixel convention {self.pixel_convention!r}")
        cond = np.linalg.cond(self.P)
        if not np.isfinite(cond) or cond > _COND_LIMIT:
            raise CameraError(f"perspective matrix is singular or ill-conditioned (cond={cond:.3g})")
        self.P_inv = np.linalg.inv(self.P)

    def pixel_to_clip(self, x, y):
        """Map continuous pixel coordinates to clip-space xy in [-1, 1]."""
        cx = 2.0 * np.asarray(x) / self.width - 1.0
        if self.pixel_convention == "y_down":
            cy = 1.0 - 2.0 * np.asarray(y) / self.height
        else:
            cy = 2.0 * np.asarray(y) / self.height - 1.0
        return cx, cy

    def clip_to_pixel(self, cx, cy):
        x = (np.asarray(cx) + 1.0) * 0.5 * self.width
        if self.pixel_convention == "y_down":
            y = (1.0 - np.asarray(cy)) * 0.5 * self.height
        else:
            y = (np.asarray(cy) + 1.0) * 0.5 * self.height
        return x, y

    def unproject(self, pixel, depth: float) -> np.ndarray:
        """Lift a pixel with clip-space depth to a 3D world point.

        Raises CameraError when the pixel is outside the image, the depth is
        outside [-1, 1], or the homogeneous w vanishes (point at infinity).
        """
        x, y = float(pixel[0]), float(pixel[1])
        if not (0.0 <= x <= self.width and 0.0 <= y <= self.height):
            raise CameraError(f"pixel ({x}, {y}) outside image {self.width}x{self.height}")
        d = float(depth)
        if not -1.0 - 1e-9 <= d <= 1.0 + 1e-9:
            raise CameraError(f"depth {d} outside encoding range [-1, 1]")
        cx, cy = self.pixel_to_clip(x, y)
        h = self.P_inv @ np.array([cx, cy, d, 1.0])
        if abs(h[3]) < _W_EPS:
            raise CameraError("point at infinity: homogeneous w vanished during unprojection")
        return h[:3] / h[3]

    def project(self, points: np.ndarray, strict: bool = True) -> np.ndarray:
        """Project world points (..., 3) to (pixel_x, pixel_y, clip_depth).

        With ``strict=False`` points whose homogeneous w vanishes come back
        as rows of +inf instead of raising.
        """
        pts = np.asarray(points, dtype=np.float64)
        squeeze = pts.ndim == 1
        pts = np.atleast_2d(pts)
        hom = np.concatenate([pts, np.ones((len(pts), 1))], axis=1)
        clip = hom @ self.P.T
        w = clip[:, 3]
        degenerate = np.abs(w) < _W_EPS
        if degenerate.any():
            if strict:
                raise CameraError("point at infinity: homogeneous w vanished during projection")
            w = np.where(degenerate, 1.0, w)
        ndc = clip[:, :3] / w[:, None]
        px, py = self.clip_to_pixel(ndc[:, 0], ndc[:, 1])
        out = np.stack([px, py, ndc[:, 2]], axis=1)
        if degenerate.any():
            out[degenerate] = np.inf
        return out[0] if squeeze else out


def standard_perspective(
    fov_deg: float,
    width: int,
    height: int,
    near: float,
    far: float,
    frustum_near: float | None = None,
    frustum_far: float | None = None,
    pixel_convention: str = "y_down",
) -> PerspectiveCamera:
    """Symmetric frustum looking down -z with the given vertical field of view.

    ``frustum_near``/``frustum_far`` default to the depth-encoding range when
    the two coincide (synthetic data); pass them separately when depth files
    use a different unit than the frustum.
    """
    fn = near if frustum_near is None else frustum_near
    ff = far if frustum_far is None else frustum_far
    if not 0 < fn < ff:
        raise CameraError("frustum near/far must satisfy 0 < near < far")
    f = 1.0 / np.tan(np.radians(fov_deg) / 2.0)
    aspect = width / height
    P = np.array(
        [
            [f / aspect, 0.0, 0.0, 0.0],
            [0.0, f, 0.0, 0.0],
            [0.0, 0.0, (ff + fn) / (fn - ff), 2.0 * ff * fn / (fn - ff)],
            [0.0, 0.0, -1.0, 0.0],
        ]
    )
    return PerspectiveCamera(P, width, height, near, far, pixel_convention)


def load_camera(path: str | Path) -> PerspectiveCamera:
    """Read a camera JSON file: row-major P, width, height, near, far."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    try:
        return PerspectiveCamera(
            P=np.asarray(data["P"], dtype=np.float64),
            width=int(data["width"]),
            height=int(data["height"]),
            near=float(data["near"]),
            far=float(data["far"]),
            pixel_convention=data.get("pixel_convention", "y_down"),
        )
    except KeyError as exc:
        raise CameraError(f"camera file {path} is missing field {exc}") from exc


def save_camera(camera: PerspectiveCamera, path: str | Path) -> None:
    data = {
        "P": camera.P.tolist(),
        "width": camera.width,
        "height": camera.height,
        "near": camera.near,
        "far": camera.far,
        "pixel_convention": camera.pixel_convention,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
