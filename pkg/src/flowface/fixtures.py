"""Synthetic meshes, flows, and depth sequences for tests and demos.

Three families:
  * grid: a flat triangulated grid with a known edge count
  * lip slit: two long near-parallel strips joined only through high-detour
    ribbons at their ends, the minimal geometry on which surface-distance
    weighting separates the strips while straight-line weighting mixes them
  * sequence: a small camera-consistent mesh/landmark/flow/depth bundle for
    exercising the full retargeting run
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

from .camera import PerspectiveCamera, save_camera, standard_perspective
from .flowio import write_flow
from .mesh import Mesh, save_obj
from .rgbd import DepthRaster, save_depth
from .controllers import save_landmarks


def grid_mesh(nx: int = 10, ny: int = 10, spacing: float = 1.0, z: float = 0.0) -> Mesh:
    """Flat triangulated grid of nx*ny vertices in the z-plane."""
    xs, ys = np.meshgrid(np.arange(nx) * spacing, np.arange(ny) * spacing)
    vertices = np.stack([xs.ravel(), ys.ravel(), np.full(nx * ny, z)], axis=1)
    faces = []
    for r in range(ny - 1):
        for c in range(nx - 1):
            a = r * nx + c
            b = a + 1
            d = a + nx
            e = d + 1
            faces.append((a, b, d))
            faces.append((b, e, d))
    return Mesh(vertices, np.asarray(faces, dtype=np.int64))


def grid_edge_count(nx: int, ny: int) -> int:
    """Edges of ``grid_mesh`` by construction: rows, columns, one diagonal per cell."""
    return (nx - 1) * ny + nx * (ny - 1) + (nx - 1) * (ny - 1)


def random_surface_mesh(rng: np.random.Generator, n_vertices: int, extent: float = 10.0) -> Mesh:
    """Connected triangulation of random points with a gently varying height."""
    if n_vertices < 3:
        raise ValueError("need at least 3 vertices")
    pts = rng.uniform(0.0, extent, size=(n_vertices, 2))
    tri = Delaunay(pts)
    z = 0.4 * np.sin(pts[:, 0]) * np.cos(pts[:, 1]) + rng.normal(0.0, 0.05, n_vertices)
    vertices = np.concatenate([pts, z[:, None]], axis=1)
    return Mesh(vertices, tri.simplices.astype(np.int64))


@dataclass
class SlitFixture:
    """Lip-slit mesh with controller anchors and measurement vertex sets.

    Controllers are ordered upper strip first, then lower strip, one per
    column on each strip's inner row. ``facing_lower[u]`` is the index (into
    that combined order) of the lower controller directly across the slit
    from upper vertex ``u``.
    """

    mesh: Mesh
    controller_vertices: list[int]
    n_upper_controllers: int
    upper_vertices: np.ndarray
    lower_vertices: np.ndarray
    facing_lower: dict[int, int]
    gap: float


def slit_mesh(nx: int = 40, rows: int = 3, dx: float = 0.1, gap: float = 0.04) -> SlitFixture:
    """Two triangulated strips facing each other across a thin gap.

    The strips connect only through ribbon arcs at the two ends whose path
    length is much larger than the gap, so crossing the slit on the surface
    requires a long detour.
    """
    dy = 0.1
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []

    def strip(sign: float) -> np.ndarray:
        ids = np.empty((nx, rows), dtype=np.int64)
        for c in range(nx):
            for r in range(rows):
                ids[c, r] = len(vertices)
                vertices.append((c * dx, sign * (gap / 2.0 + r * dy), 0.0))
        for c in range(nx - 1):
            for r in range(rows - 1):
                a, b = ids[c, r], ids[c + 1, r]
                d, e = ids[c, r + 1], ids[c + 1, r + 1]
                faces.append((a, b, d))
                faces.append((b, e, d))
        return ids

    upper = strip(+1.0)
    lower = strip(-1.0)

    def end_ribbon(col: int, outward: float) -> None:
        # two parallel arcs bulging in z between the inner corner vertices;
        # the chord is `gap` but the path length is ~30x longer
        n_seg = 8
        s = np.linspace(0.0, 1.0, n_seg + 1)
        ys = gap / 2.0 - gap * s
        zs = 0.55 * np.sin(np.pi * s)
        chain1 = [int(upper[col, 0])]
        for i in range(1, n_seg):
            chain1.append(len(vertices))
            vertices.append((col * dx, float(ys[i]), float(zs[i])))
        chain1.append(int(lower[col, 0]))
        chain2 = []
        for i in range(n_seg + 1):
            chain2.append(len(vertices))
            vertices.append((col * dx + outward, float(ys[i]), float(zs[i]) + 0.03))
        for i in range(n_seg):
            faces.append((chain1[i], chain1[i + 1], chain2[i]))
            faces.append((chain2[i], chain1[i + 1], chain2[i + 1]))

    end_ribbon(0, -0.06)
    end_ribbon(nx - 1, +0.06)

    mesh = Mesh(np.asarray(vertices), np.asarray(faces, dtype=np.int64))
    upper_ctl = [int(upper[c, 0]) for c in range(nx)]
    lower_ctl = [int(lower[c, 0]) for c in range(nx)]
    facing = {}
    for c in range(nx):
        for r in range(rows):
            facing[int(upper[c, r])] = nx + c  # lower controller of the same column
    return SlitFixture(
        mesh=mesh,
        controller_vertices=upper_ctl + lower_ctl,
        n_upper_controllers=nx,
        upper_vertices=upper.ravel().copy(),
        lower_vertices=lower.ravel().copy(),
        facing_lower=facing,
        gap=gap,
    )


def face_patch_mesh(nu: int = 25, nv: int = 20, depth_center: float = -2.0) -> Mesh:
    """Gently bulging rectangular patch of nu*nv vertices facing the camera."""
    u, v = np.meshgrid(np.linspace(-0.5, 0.5, nu), np.linspace(-0.5, 0.5, nv), indexing="ij")
    x = 1.6 * u
    y = 2.0 * v
    z = depth_center + 0.4 * np.cos(np.pi * u) * np.cos(np.pi * v)
    vertices = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
    faces = []
    for i in range(nu - 1):
        for j in range(nv - 1):
            a = i * nv + j
            b = a + nv
            faces.append((a, b, a + 1))
            faces.append((b, b + 1, a + 1))
    return Mesh(vertices, np.asarray(faces, dtype=np.int64))


def sequence_camera(size: int = 128) -> PerspectiveCamera:
    # frustum in world units; depth files encode clip z over a [500, 5000] code range
    return standard_perspective(
        fov_deg=60.0, width=size, height=size, near=500.0, far=5000.0,
        frustum_near=0.5, frustum_far=6.0,
    )


def synthetic_sequence(
    out_dir: str | Path,
    n_frames: int = 20,
    size: int = 128,
    motion_scale: float = 1.0,
    n_landmarks: int = 25,
) -> dict:
    """Write a complete retargeting input bundle and return its manifest.

    Layout: mesh.obj, camera.json, landmarks.json, frames/rest_depth.png,
    frames/depth_%05d.png, flows/flow_%05d.flo, run.json. With
    ``motion_scale=0`` every flow is zero and every depth equals the rest
    depth, so retargeting must reproduce the rest mesh exactly.
    """
    out_dir = Path(out_dir)
    frames_dir = out_dir / "frames"
    flow_dir = out_dir / "flows"
    output_dir = out_dir / "out"
    for d in (out_dir, frames_dir, flow_dir, output_dir):
        d.mkdir(parents=True, exist_ok=True)

    mesh = face_patch_mesh()
    camera = sequence_camera(size)
    save_obj(mesh, out_dir / "mesh.obj")
    save_camera(camera, out_dir / "camera.json")

    step = max(1, mesh.n_vertices // n_landmarks)
    landmark_vertices = list(range(0, mesh.n_vertices, step))[:n_landmarks]
    projected = camera.project(mesh.vertices[landmark_vertices])
    landmarks = [
        {"id": i, "x_px": float(px), "y_px": float(py)}
        for i, (px, py, _) in enumerate(projected)
    ]
    save_landmarks(landmarks, out_dir / "landmarks.json")

    xs = np.arange(size)[None, :].repeat(size, axis=0)
    ys = np.arange(size)[:, None].repeat(size, axis=1)
    u = xs / (size - 1) - 0.5
    v = ys / (size - 1) - 0.5
    rest_depth_values = (0.15 + 0.3 * np.cos(np.pi * u) * np.cos(np.pi * v)).astype(np.float32)
    rest = DepthRaster(values=rest_depth_values, valid=np.ones((size, size), dtype=bool))
    save_depth(frames_dir / "rest_depth.png", rest, camera.near, camera.far)

    for t in range(n_frames):
        phase = 2.0 * np.pi * t / max(n_frames, 1)
        fx = motion_scale * (3.0 * np.sin(phase) + 0.5 * np.sin(2.0 * np.pi * ys / size))
        fy = motion_scale * (-2.0 * np.cos(phase) + 0.5 * np.cos(2.0 * np.pi * xs / size))
        flow = np.stack([fx, fy]).astype(np.float32)
        write_flow(flow_dir / f"flow_{t:05d}.flo", flow)

        wobble = 0.08 * motion_scale * np.sin(phase) * np.cos(np.pi * u)
        depth_t = np.clip(rest_depth_values + wobble, -1.0, 1.0).astype(np.float32)
        save_depth(
            frames_dir / f"depth_{t:05d}.png",
            DepthRaster(values=depth_t, valid=np.ones((size, size), dtype=bool)),
            camera.near,
            camera.far,
        )

    config = {
        "mesh": str(out_dir / "mesh.obj"),
        "camera": str(out_dir / "camera.json"),
        "landmarks": str(out_dir / "landmarks.json"),
        "frames_dir": str(frames_dir),
        "flow_dir": str(flow_dir),
        "output_dir": str(output_dir),
    }
    with open(out_dir / "run.json", "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2)
        fh.write("\n")
    return {
        "mesh": str(out_dir / "mesh.obj"),
        "camera": str(out_dir / "camera.json"),
        "landmarks": str(out_dir / "landmarks.json"),
        "frames_dir": str(frames_dir),
        "flow_dir": str(flow_dir),
        "output_dir": str(output_dir),
        "config": str(out_dir / "run.json"),
        "n_frames": n_frames,
        "n_vertices": mesh.n_vertices,
    }


def write_grid_fixture(out_dir: str | Path, nx: int = 10, ny: int = 10) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mesh = grid_mesh(nx, ny)
    path = out_dir / "grid.obj"
    save_obj(mesh, path)
    return {"mesh": str(path), "n_vertices": mesh.n_vertices, "n_edges": grid_edge_count(nx, ny)}


def write_slit_fixture(out_dir: str | Path) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fx = slit_mesh()
    mesh_path = out_dir / "slit.obj"
    save_obj(fx.mesh, mesh_path)
    meta = {
        "controller_vertices": fx.controller_vertices,
        "n_upper_controllers": fx.n_upper_controllers,
        "upper_vertices": fx.upper_vertices.tolist(),
        "lower_vertices": fx.lower_vertices.tolist(),
        "facing_lower": {str(k): v for k, v in fx.facing_lower.items()},
        "gap": fx.gap,
    }
    meta_path = out_dir / "slit_meta.json"
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"mesh": str(mesh_path), "meta": str(meta_path), "n_vertices": fx.mesh.n_vertices}
