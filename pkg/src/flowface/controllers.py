"""Landmark controllers and their per-vertex blend weights.

Each controller is a facial landmark anchored to a mesh vertex. A vertex is
influenced by its k nearest controllers, nearest in surface (edge-graph)
distance, with raw weights equal to the inverse square of that distance and
rows normalized to sum to one. Euclidean weighting is available for
comparison; it is what produces cross-lip bleed on slit geometry.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .camera import PerspectiveCamera
from .errors import WeightError
from .mesh import EdgeGraph, Mesh, build_edge_graph, shortest_path_lengths

METRICS = ("geodesic", "euclidean")


@dataclass
class Controller:
    """A landmark anchored to mesh vertex ``vertex``.

    ``rest_pixel`` is where the landmark sits in the rest image (NaN when the
    controller was constructed without a camera); ``rest_position`` is the
    anchored vertex position in world units.
    """

    vertex: int
    rest_pixel: tuple[float, float]
    rest_position: np.ndarray

    def __post_init__(self) -> None:
        self.rest_position = np.asarray(self.rest_position, dtype=np.float64).reshape(3)


@dataclass
class ControllerSet:
    controllers: list[Controller]
    k: int = 10
    metric: str = "geodesic"
    weights: sparse.csr_matrix | None = field(default=None, repr=False)
    dropped_landmarks: int = 0
    zero_weight_vertices: int = 0

    def __len__(self) -> int:
        return len(self.controllers)


def load_landmarks(path: str | Path) -> list[dict]:
    """Landmark file: JSON array of objects {id, x_px, y_px}."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise WeightError(f"{path}: landmark file must be a JSON array")
    out = []
    for i, item in enumerate(data):
        try:
            out.append({"id": item["id"], "x_px": float(item["x_px"]), "y_px": float(item["y_px"])})
        except (KeyError, TypeError) as exc:
            raise WeightError(f"{path}: landmark #{i} is missing id/x_px/y_px") from exc
    return out


def save_landmarks(landmarks: list[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(landmarks, fh, indent=2)
        fh.write("\n")


def anchor_landmarks(
    mesh: Mesh,
    landmarks: list[dict],
    camera: PerspectiveCamera,
    max_px: float | None = None,
) -> ControllerSet:
    """Attach 2D landmarks to mesh vertices by nearest rest-pose projection.

    Landmarks outside the image, or farther than ``max_px`` from every
    projected vertex (default: 5% of the image diagonal), are dropped and
    counted rather than guessed at.
    """
    if max_px is None:
        max_px = 0.05 * float(np.hypot(camera.width, camera.height))
    projected = camera.project(mesh.vertices, strict=False)
    pixels = projected[:, :2]
    usable = np.isfinite(pixels).all(axis=1)
    if not usable.any():
        raise WeightError("no mesh vertex projects to a finite pixel position")
    tree = cKDTree(pixels[usable])
    usable_ids = np.flatnonzero(usable)

    controllers: list[Controller] = []
    dropped = 0
    for lm in landmarks:
        x, y = lm["x_px"], lm["y_px"]
        inside = 0.0 <= x <= camera.width - 1 and 0.0 <= y <= camera.height - 1
        if not inside:
            dropped += 1
            continue
        dist, idx = tree.query([x, y])
        if dist > max_px:
            dropped += 1
            continue
        v = int(usable_ids[idx])
        controllers.append(Controller(vertex=v, rest_pixel=(x, y), rest_position=mesh.vertices[v]))
    return ControllerSet(controllers=controllers, dropped_landmarks=dropped)


def controllers_from_vertices(
    mesh: Mesh, vertex_ids, camera: PerspectiveCamera | None = None
) -> ControllerSet:
    """Build a controller set directly from mesh vertex indices."""
    controllers = []
    for v in vertex_ids:
        v = int(v)
        if not 0 <= v < mesh.n_vertices:
            raise WeightError(f"controller vertex {v} out of range")
        if camera is not None:
            px = camera.project(mesh.vertices[v], strict=False)
            pixel = (float(px[0]), float(px[1]))
        else:
            pixel = (float("nan"), float("nan"))
        controllers.append(Controller(vertex=v, rest_pixel=pixel, rest_position=mesh.vertices[v]))
    return ControllerSet(controllers=controllers)


def controller_distance_matrix(
    mesh: Mesh, cset: ControllerSet, metric: str, graph: EdgeGraph | None = None
) -> np.ndarray:
    """(C, V) distances from each controller to every vertex under ``metric``."""
    if metric not in METRICS:
        raise WeightError(f"unknown metric {metric!r}, expected one of {METRICS}")
    n_ctl = len(cset)
    dists = np.empty((n_ctl, mesh.n_vertices))
    if metric == "geodesic":
        if graph is None:
            graph = build_edge_graph(mesh)
        for j, ctl in enumerate(cset.controllers):
            dists[j] = shortest_path_lengths(graph, ctl.vertex)
    else:
        for j, ctl in enumerate(cset.controllers):
            dists[j] = np.linalg.norm(mesh.vertices - ctl.rest_position[None, :], axis=1)
    return dists


def compute_controlling_weights(
    mesh: Mesh,
    cset: ControllerSet,
    k: int = 10,
    metric: str = "geodesic",
    graph: EdgeGraph | None = None,
) -> ControllerSet:
    """Fill the sparse (V, C) weight matrix of a controller set.

    For each vertex the ``k`` nearest controllers (ties broken toward the
    lower controller index) receive weight 1/d^2, normalized to sum to one.
    A vertex sitting exactly on a controller gives that controller weight 1.
    Vertices whose reachable controller set is empty get an all-zero row and
    are counted in ``zero_weight_vertices``.
    """
    n_ctl = len(cset)
    if n_ctl == 0:
        raise WeightError("controller set is empty")
    if k < 1:
        raise WeightError(f"k must be >= 1, got {k}")
    k_eff = min(k, n_ctl)

    dists = controller_distance_matrix(mesh, cset, metric, graph=graph)

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    zero_rows = 0
    ctl_index = np.arange(n_ctl)
    for i in range(mesh.n_vertices):
        d = dists[:, i]
        # stable order: distance first, controller index breaks ties
        order = np.lexsort((ctl_index, d))
        nearest = order[:k_eff]
        nearest = nearest[np.isfinite(d[nearest])]
        if nearest.size == 0:
            zero_rows += 1
            continue
        if d[nearest[0]] == 0.0:
            rows.append(i)
            cols.append(int(nearest[0]))
            vals.append(1.0)
            continue
        w = 1.0 / np.square(d[nearest])
        w /= w.sum()
        rows.extend([i] * len(nearest))
        cols.extend(int(c) for c in nearest)
        vals.extend(float(x) for x in w)

    weights = sparse.csr_matrix(
        (vals, (rows, cols)), shape=(mesh.n_vertices, n_ctl), dtype=np.float64
    )
    if zero_rows:
        warnings.warn(
            f"{zero_rows} vertices have no reachable controller and will stay undeformed",
            stacklevel=2,
        )
    return replace(cset, weights=weights, k=k, metric=metric, zero_weight_vertices=zero_rows)


def save_weights(cset: ControllerSet, path: str | Path) -> None:
    if cset.weights is None:
        raise WeightError("controller set has no weights to save")
    w = cset.weights.tocsr()
    data = {
        "k": cset.k,
        "metric": cset.metric,
        "dropped_landmarks": cset.dropped_landmarks,
        "zero_weight_vertices": cset.zero_weight_vertices,
        "controllers": [
            {
                "vertex": c.vertex,
                "pixel": [c.rest_pixel[0], c.rest_pixel[1]],
                "position": c.rest_position.tolist(),
            }
            for c in cset.controllers
        ],
        "weights": {
            "shape": list(w.shape),
            "indptr": w.indptr.tolist(),
            "indices": w.indices.tolist(),
            "data": w.data.tolist(),
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, sort_keys=True)
        fh.write("\n")


def load_weights(path: str | Path) -> ControllerSet:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    try:
        controllers = [
            Controller(
                vertex=int(c["vertex"]),
                rest_pixel=(float(c["pixel"][0]), float(c["pixel"][1])),
                rest_position=np.asarray(c["position"], dtype=np.float64),
            )
            for c in data["controllers"]
        ]
        wblock = data["weights"]
        weights = sparse.csr_matrix(
            (wblock["data"], wblock["indices"], wblock["indptr"]),
            shape=tuple(wblock["shape"]),
        )
        return ControllerSet(
            controllers=controllers,
            k=int(data["k"]),
            metric=data["metric"],
            weights=weights,
            dropped_landmarks=int(data.get("dropped_landmarks", 0)),
            zero_weight_vertices=int(data.get("zero_weight_vertices", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise WeightError(f"{path}: malformed weight file: {exc}") from exc
