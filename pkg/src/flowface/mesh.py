"""Triangle meshes, Wavefront OBJ I/O, and shortest-path distance fields.

Surface distances are measured over the mesh edge graph (Dijkstra with
Euclidean edge lengths), which preserves the topology of narrow slits such
as the gap between the lips: two vertices that are close in space but far
along the surface get a large distance.
"""

from __future__ import annotations

import heapq
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MeshError


@dataclass
class Mesh:
    """Triangle mesh: ``vertices`` (V, 3) float64 and ``faces`` (F, 3) int64.

    Faces index into ``vertices``. Every face must have three distinct,
    in-range indices; geometry is otherwise unconstrained.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self) -> None:
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
                raise MeshError(
                    f"face index out of range (mesh has {len(self.vertices)} vertices)"
                )
            a, b, c = self.faces.T
            bad = (a == b) | (b == c) | (a == c)
            if bad.any():
                raise MeshError(
                    f"degenerate face {int(np.flatnonzero(bad)[0])}: repeated vertex index"
                )

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def copy(self) -> "Mesh":
        return Mesh(self.vertices.copy(), self.faces.copy())

    def with_vertices(self, vertices: np.ndarray) -> "Mesh":
        """New mesh with replaced vertex positions; connectivity is shared."""
        return Mesh(np.asarray(vertices, dtype=np.float64), self.faces)


@dataclass
class EdgeGraph:
    """Undirected edge graph of a mesh with Euclidean edge lengths."""

    n_vertices: int
    edges: np.ndarray    # (E, 2) unique vertex pairs, each sorted low-high
    lengths: np.ndarray  # (E,) positive lengths
    neighbors: list = field(repr=False, default_factory=list)
    neighbor_lengths: list = field(repr=False, default_factory=list)

    @classmethod
    def from_edges(cls, n_vertices: int, edges: np.ndarray, lengths: np.ndarray) -> "EdgeGraph":
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        lengths = np.asarray(lengths, dtype=np.float64).reshape(-1)
        if len(edges) != len(lengths):
            raise MeshError("edge and length counts differ")
        if len(lengths) and lengths.min() <= 0:
            raise MeshError("edge lengths must be positive")
        nbr: list = [[] for _ in range(n_vertices)]
        nln: list = [[] for _ in range(n_vertices)]
        for (u, v), w in zip(edges.tolist(), lengths.tolist()):
            nbr[u].append(v)
            nln[u].append(w)
            nbr[v].append(u)
            nln[v].append(w)
        return cls(n_vertices, edges, lengths, nbr, nln)

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def build_edge_graph(mesh: Mesh) -> EdgeGraph:
    """Collect each mesh edge exactly once with its Euclidean length.

    Raises MeshError naming the face if an edge has coincident endpoints.
    """
    if mesh.n_faces == 0:
        return EdgeGraph.from_edges(mesh.n_vertices, np.empty((0, 2), np.int64), np.empty(0))
    f = mesh.faces
    raw = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    face_of = np.tile(np.arange(len(f)), 3)
    diff = mesh.vertices[raw[:, 0]] - mesh.vertices[raw[:, 1]]
    lengths = np.linalg.norm(diff, axis=1)
    zero = lengths == 0.0
    if zero.any():
        i = int(np.flatnonzero(zero)[0])
        raise MeshError(
            f"face {int(face_of[i])} has a zero-length edge "
            f"({int(raw[i, 0])}, {int(raw[i, 1])}): coincident endpoints"
        )
    key = np.sort(raw, axis=1)
    edges, first = np.unique(key, axis=0, return_index=True)
    return EdgeGraph.from_edges(mesh.n_vertices, edges, lengths[first])


def is_connected(graph: EdgeGraph) -> bool:
    """True when every vertex is reachable from vertex 0 over the edge graph."""
    if graph.n_vertices == 0:
        return True
    seen = np.zeros(graph.n_vertices, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for v in graph.neighbors[u]:
            if not seen[v]:
                seen[v] = True
                stack.append(v)
    return bool(seen.all())


@dataclass
class DistanceField:
    """Per-vertex shortest-path distances from one source vertex.

    ``dist[source] == 0``; unreachable vertices carry ``+inf``.
    """

    source: int
    dist: np.ndarray


def shortest_path_lengths(graph: EdgeGraph, source: int) -> np.ndarray:
    """Single-source Dijkstra over the edge graph. Deterministic for any heap order."""
    n = graph.n_vertices
    if not 0 <= source < n:
        raise MeshError(f"source vertex {source} out of range for {n} vertices")
    dist = np.full(n, np.inf)
    dist[source] = 0.0
    done = np.zeros(n, dtype=bool)
    heap = [(0.0, source)]
    nbr, nln = graph.neighbors, graph.neighbor_lengths
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v, w in zip(nbr[u], nln[u]):
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def geodesic_distances(mesh: Mesh, source: int, graph: EdgeGraph | None = None) -> DistanceField:
    """Surface distance field from ``source`` to every vertex.

    Disconnected meshes are tolerated: unreachable vertices get +inf and a
    warning is emitted so callers can decide how to treat them.
    """
    if graph is None:
        graph = build_edge_graph(mesh)
    dist = shortest_path_lengths(graph, source)
    n_inf = int(np.isinf(dist).sum())
    if n_inf:
        warnings.warn(
            f"{n_inf} vertices unreachable from vertex {source}; distances set to +inf",
            stacklevel=2,
        )
    return DistanceField(source=source, dist=dist)


def load_obj(path: str | Path) -> Mesh:
    """Parse a Wavefront OBJ mesh (``v`` and triangular ``f`` records only).

    Vertex indices are 1-based in the file. Faces with more or fewer than
    three vertices are rejected; ``v/vt/vn`` fragments keep the vertex index.
    """
    path = Path(path)
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            tag = tokens[0]
            if tag == "v":
                if len(tokens) < 4:
                    raise MeshError(f"{path.name}:{lineno}: vertex needs 3 coordinates")
                try:
                    vertices.append((float(tokens[1]), float(tokens[2]), float(tokens[3])))
                except ValueError as exc:
                    raise MeshError(f"{path.name}:{lineno}: bad vertex coordinate") from exc
            elif tag == "f":
                if len(tokens) != 4:
                    raise MeshError(
                        f"{path.name}:{lineno}: only triangles are supported, "
                        f"got a face with {len(tokens) - 1} vertices"
                    )
                idx = []
                for tok in tokens[1:]:
                    head = tok.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError as exc:
                        raise MeshError(f"{path.name}:{lineno}: bad face index {head!r}") from exc
                    if i < 1:
                        raise MeshError(
                            f"{path.name}:{lineno}: only positive 1-based indices are supported"
                        )
                    idx.append(i - 1)
                faces.append((idx[0], idx[1], idx[2]))
    verts = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    face_arr = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    return Mesh(verts, face_arr)


def save_obj(mesh: Mesh, path: str | Path) -> None:
    """Write an OBJ file with 6-decimal vertex coordinates and 1-based faces.

    Output is byte-deterministic for a given mesh.
    """
    lines = [f"v {x:.6f} {y:.6f} {z:.6f}" for x, y, z in mesh.vertices]
    lines.extend(f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
