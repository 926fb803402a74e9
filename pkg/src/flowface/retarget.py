"""Flow-driven mesh deformation.

Per frame: each controller's rest pixel is displaced by the dense flow
field, both endpoints are lifted to 3D with the depth rasters and the
camera, and the resulting per-controller translations are blended into the
rest mesh through the controlling weights. Every frame is deformed from the
rest mesh, never chained, so errors cannot accumulate over a sequence.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .camera import PerspectiveCamera
from .controllers import ControllerSet
from .errors import PipelineError, WeightError
from .mesh import Mesh
from .rgbd import DepthRaster
from .warp import sample_bilinear

# Invalid-depth recovery: bilinear over the valid corners of the sample cell,
# then nearest valid texel within this radius, then the controller goes
# inactive for the frame.
DEPTH_SEARCH_RADIUS = 3.0


@dataclass
class ControllerTransform:
    """Pure translation of one controller in world units."""

    controller: int
    translation: np.ndarray

    def __post_init__(self) -> None:
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.isfinite(self.translation).all():
            raise PipelineError(
                f"controller {self.controller}: translation has non-finite components"
            )


@dataclass
class FrameMotion:
    """Inputs driving one output frame: dense flow plus source/animated depth."""

    flow: np.ndarray
    depth_src: DepthRaster
    depth_dst: DepthRaster

    def __post_init__(self) -> None:
        self.flow = np.asarray(self.flow, dtype=np.float32)
        if self.flow.ndim != 3 or self.flow.shape[0] != 2:
            raise PipelineError(f"flow must be (2, H, W), got {self.flow.shape}")


@dataclass
class FrameDiagnostics:
    frame: int = 0
    clamped_controllers: list[int] = field(default_factory=list)
    inactive_controllers: list[int] = field(default_factory=list)
    undeformed_vertices: int = 0


def track_controller(rest_pixel, flow: np.ndarray):
    """Displace a pixel by the bilinearly sampled flow.

    Returns (displaced_pixel, clamped): positions that leave the image are
    clamped to the border and flagged.
    """
    x, y = float(rest_pixel[0]), float(rest_pixel[1])
    h, w = flow.shape[-2:]
    if not (0.0 <= x <= w - 1 and 0.0 <= y <= h - 1):
        raise PipelineError(f"rest pixel ({x}, {y}) outside {w}x{h} image")
    dx = float(sample_bilinear(flow[0], x, y))
    dy = float(sample_bilinear(flow[1], x, y))
    px, py = x + dx, y + dy
    cx = min(max(px, 0.0), float(w - 1))
    cy = min(max(py, 0.0), float(h - 1))
    return (cx, cy), (cx != px or cy != py)


def sample_depth(depth: DepthRaster, x: float, y: float, radius: float = DEPTH_SEARCH_RADIUS):
    """Depth at a fractional pixel, tolerant of invalid (hole) texels.

    Bilinear over the valid corners of the enclosing cell when possible;
    otherwise the nearest valid texel within ``radius``. Returns
    (value, ok); ok is False when no valid depth is reachable.
    """
    values, valid = depth.values, depth.valid
    h, w = values.shape
    x0 = int(np.clip(np.floor(x), 0, w - 1))
    y0 = int(np.clip(np.floor(y), 0, h - 1))
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    tx = np.clip(x - x0, 0.0, 1.0)
    ty = np.clip(y - y0, 0.0, 1.0)
    corners = ((y0, x0), (y0, x1), (y1, x0), (y1, x1))
    weights = (
        (1.0 - ty) * (1.0 - tx),
        (1.0 - ty) * tx,
        ty * (1.0 - tx),
        ty * tx,
    )
    acc = 0.0
    wsum = 0.0
    for (cy, cx), wt in zip(corners, weights):
        if valid[cy, cx]:
            acc += wt * float(values[cy, cx])
            wsum += wt
    if wsum > 0.0:
        return acc / wsum, True

    # cell entirely invalid: nearest valid texel within the search radius,
    # scanned in a deterministic (distance, row, column) order
    cx0 = int(round(x))
    cy0 = int(round(y))
    r = int(np.ceil(radius))
    best = None
    for oy in range(-r, r + 1):
        for ox in range(-r, r + 1):
            ty_, tx_ = cy0 + oy, cx0 + ox
            if not (0 <= ty_ < h and 0 <= tx_ < w) or not valid[ty_, tx_]:
                continue
            d2 = (ty_ - y) ** 2 + (tx_ - x) ** 2
            if d2 <= radius * radius and (best is None or d2 < best[0]):
                best = (d2, float(values[ty_, tx_]))
    if best is not None:
        return best[1], True
    return 0.0, False


def estimate_controller_transform(
    controller: int,
    rest_pixel,
    displaced_pixel,
    depth_src: DepthRaster,
    depth_dst: DepthRaster,
    camera: PerspectiveCamera,
) -> ControllerTransform | None:
    """3D translation between the unprojected rest and displaced positions.

    Returns None (controller inactive this frame) when no valid depth exists
    near either pixel.
    """
    d0, ok0 = sample_depth(depth_src, rest_pixel[0], rest_pixel[1])
    d1, ok1 = sample_depth(depth_dst, displaced_pixel[0], displaced_pixel[1])
    if not (ok0 and ok1):
        return None
    p0 = camera.unproject(rest_pixel, d0)
    p1 = camera.unproject(displaced_pixel, d1)
    return ControllerTransform(controller=controller, translation=p1 - p0)


def deform_mesh(
    mesh: Mesh,
    cset: ControllerSet,
    transforms: list[ControllerTransform],
    inactive: frozenset | set = frozenset(),
) -> tuple[Mesh, int]:
    """Blend controller translations into the rest mesh.

    Weight mass of ``inactive`` controllers is renormalized over the rest of
    each row; rows that lose all mass leave their vertex undeformed and are
    counted in the returned diagnostic. A missing transform for an active,
    nonzero-weight controller is an error. Connectivity is untouched.
    """
    if cset.weights is None:
        raise WeightError("controlling weights have not been computed")
    n_ctl = len(cset)
    weights = cset.weights.tocsr()
    if weights.shape != (mesh.n_vertices, n_ctl):
        raise WeightError(
            f"weight matrix {weights.shape} does not match mesh/controllers "
            f"({mesh.n_vertices}, {n_ctl})"
        )

    translation = np.zeros((n_ctl, 3))
    provided = np.zeros(n_ctl, dtype=bool)
    for t in transforms:
        if not 0 <= t.controller < n_ctl:
            raise PipelineError(f"transform references unknown controller {t.controller}")
        translation[t.controller] = t.translation
        provided[t.controller] = True

    active = np.ones(n_ctl, dtype=bool)
    for j in inactive:
        active[j] = False
    column_mass = np.asarray(weights.sum(axis=0)).ravel()
    missing = active & ~provided & (column_mass > 0.0)
    if missing.any():
        raise PipelineError(
            f"no transform provided for active controller {int(np.flatnonzero(missing)[0])} "
            "which carries nonzero weight"
        )

    if active.all():
        effective = weights
        lost = np.zeros(mesh.n_vertices, dtype=bool)
    else:
        effective = weights.multiply(active[None, :]).tocsr()
        row_sum = np.asarray(effective.sum(axis=1)).ravel()
        had_mass = np.asarray(weights.sum(axis=1)).ravel() > 0.0
        lost = had_mass & (row_sum == 0.0)
        safe = np.where(row_sum > 0.0, row_sum, 1.0)
        effective = sparse_row_scale(effective, np.where(row_sum > 0.0, 1.0 / safe, 0.0))

    displacement = effective @ translation
    return mesh.with_vertices(mesh.vertices + displacement), int(lost.sum())


def sparse_row_scale(matrix, scale: np.ndarray):
    """Scale each CSR row by a factor without densifying."""
    out = matrix.tocsr(copy=True)
    counts = np.diff(out.indptr)
    out.data *= np.repeat(scale, counts)
    return out


def retarget_frame(
    mesh: Mesh,
    cset: ControllerSet,
    camera: PerspectiveCamera,
    motion: FrameMotion,
    frame: int = 0,
) -> tuple[Mesh, FrameDiagnostics]:
    """Deform the rest mesh according to one frame's flow and depth."""
    h, w = motion.flow.shape[-2:]
    if (w, h) != (camera.width, camera.height):
        raise PipelineError(
            f"frame {frame}: flow resolution {w}x{h} does not match "
            f"camera {camera.width}x{camera.height}"
        )
    for name, raster in (("source depth", motion.depth_src), ("animated depth", motion.depth_dst)):
        if raster.shape != (h, w):
            raise PipelineError(
                f"frame {frame}: {name} resolution {raster.shape[::-1]} does not match flow {w}x{h}"
            )

    diag = FrameDiagnostics(frame=frame)
    transforms: list[ControllerTransform] = []
    inactive: set[int] = set()
    for j, ctl in enumerate(cset.controllers):
        displaced, clamped = track_controller(ctl.rest_pixel, motion.flow)
        if clamped:
            diag.clamped_controllers.append(j)
        t = estimate_controller_transform(
            j, ctl.rest_pixel, displaced, motion.depth_src, motion.depth_dst, camera
        )
        if t is None:
            inactive.add(j)
        else:
            transforms.append(t)
    diag.inactive_controllers = sorted(inactive)
    deformed, lost = deform_mesh(mesh, cset, transforms, inactive=frozenset(inactive))
    diag.undeformed_vertices = lost
    return deformed, diag


def retarget_sequence(
    mesh: Mesh,
    cset: ControllerSet,
    camera: PerspectiveCamera,
    frames: list[FrameMotion],
    workers: int = 1,
) -> tuple[list[Mesh], list[FrameDiagnostics]]:
    """One deformed mesh per frame, each computed independently from the rest mesh.

    Results are identical for any worker count; frames only share read-only
    inputs.
    """
    if not frames:
        return [], []
    h, w = frames[0].flow.shape[-2:]
    for i, fm in enumerate(frames):
        if fm.flow.shape[-2:] != (h, w):
            raise PipelineError(
                f"frame {i}: resolution {fm.flow.shape[-1]}x{fm.flow.shape[-2]} "
                f"differs from frame 0 ({w}x{h})"
            )

    def work(i: int):
        return retarget_frame(mesh, cset, camera, frames[i], frame=i)

    if workers <= 1:
        results = [work(i) for i in range(len(frames))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, range(len(frames))))
    meshes = [r[0] for r in results]
    diags = [r[1] for r in results]
    return meshes, diags
