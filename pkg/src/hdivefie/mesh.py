"""Closed oriented triangle meshes, icospheres and barycentric refinement.

Conventions
-----------
Triangles are stored counter-clockwise seen from outside, so the right-hand
normal points out of the enclosed volume.  Local edge ``a`` of a triangle is the
edge opposite local vertex ``a`` and runs from vertex ``a+1`` to ``a+2``.

Every edge stores its vertex pair in the order in which its *left* triangle
traverses it; the *right* triangle traverses it backwards.  Reference flux of
edge-based functions goes from left to right.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "MeshError",
    "Mesh",
    "RefinementMap",
    "generate_sphere",
    "load_mesh",
    "save_mesh",
    "barycentric_refine",
    "mesh_h",
]


class MeshError(ValueError):
    """Raised for unreadable, open, non-manifold or inconsistently oriented meshes."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable closed triangle surface with edge connectivity.

    Attributes
    ----------
    vertices : (V, 3) float array
    triangles : (F, 3) int array, counter-clockwise seen from outside
    edges : (E, 2) int array, vertex pair in the left triangle's traversal order
    edge_triangles : (E, 2) int array, ``[left, right]`` triangle per edge
    triangle_edges : (F, 3) int array, edge opposite each local vertex
    triangle_edge_signs : (F, 3) array of +1 (triangle is left) or -1 (right)
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray = field(repr=False)
    edge_triangles: np.ndarray = field(repr=False)
    triangle_edges: np.ndarray = field(repr=False)
    triangle_edge_signs: np.ndarray = field(repr=False)

    @classmethod
    def from_arrays(cls, vertices, triangles, *, area_tol: float = 1e-14) -> "Mesh":
        """Build connectivity and validate closedness, orientation and areas."""
        v = np.ascontiguousarray(vertices, dtype=float)
        t = np.ascontiguousarray(triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError("vertices must have shape (V, 3)")
        if t.ndim != 2 or t.shape[1] != 3 or len(t) == 0:
            raise MeshError("triangles must have shape (F, 3) with F > 0")
        if t.min() < 0 or t.max() >= len(v):
            raise MeshError("triangle references a vertex index out of range")
        if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
            raise MeshError("triangle with repeated vertex")
        if not np.all(np.isfinite(v)):
            raise MeshError("non-finite vertex coordinates")

        cross = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        dbl_area = np.linalg.norm(cross, axis=1)
        scale = max(np.ptp(v, axis=0).max(), 1.0) ** 2
        bad = np.flatnonzero(dbl_area <= area_tol * scale)
        if bad.size:
            raise MeshError(f"degenerate (zero-area) triangle {int(bad[0])}")

        F = len(t)
        # directed half-edges: local edge a runs t[a+1] -> t[a+2]
        start = t[:, [1, 2, 0]].ravel()
        end = t[:, [2, 0, 1]].ravel()
        owner = np.repeat(np.arange(F), 3)
        local = np.tile(np.arange(3), F)

        directed = start * len(v) + end
        if len(np.unique(directed)) != len(directed):
            raise MeshError("orientation inconsistency: a directed edge is used twice "
                            "(flipped triangle or non-manifold edge)")
        lo = np.minimum(start, end)
        hi = np.maximum(start, end)
        key = lo * len(v) + hi
        uniq, inverse, counts = np.unique(key, return_inverse=True, return_counts=True)
        if np.any(counts != 2):
            e = int(np.flatnonzero(counts != 2)[0])
            raise MeshError(f"open or non-manifold surface: edge {divmod(int(uniq[e]), len(v))} "
                            f"borders {int(counts[e])} triangle(s)")

        E = len(uniq)
        order = np.argsort(inverse, kind="stable")
        first, second = order[0::2], order[1::2]
        # the half-edge whose start < end decides which triangle is "left"
        swap = start[first] > end[first]
        left = np.where(swap, second, first)
        right = np.where(swap, first, second)
        if np.any(start[left] != end[right]) or np.any(end[left] != start[right]):
            raise MeshError("orientation inconsistency between neighbouring triangles")

        edges = np.stack([start[left], end[left]], axis=1)
        edge_tris = np.stack([owner[left], owner[right]], axis=1)
        tri_edges = np.empty((F, 3), dtype=np.int64)
        tri_signs = np.empty((F, 3), dtype=np.int64)
        tri_edges[owner[left], local[left]] = np.arange(E)
        tri_signs[owner[left], local[left]] = 1
        tri_edges[owner[right], local[right]] = np.arange(E)
        tri_signs[owner[right], local[right]] = -1

        for arr in (v, t, edges, edge_tris, tri_edges, tri_signs):
            arr.setflags(write=False)
        return cls(v, t, edges, edge_tris, tri_edges, tri_signs)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_triangles

    @property
    def corners(self) -> np.ndarray:
        """(F, 3, 3) array of triangle vertex coordinates."""
        return self.vertices[self.triangles]

    @property
    def normals(self) -> np.ndarray:
        """(F, 3) unit right-hand normals."""
        c = self.corners
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        return n / np.linalg.norm(n, axis=1)[:, None]

    @property
    def areas(self) -> np.ndarray:
        c = self.corners
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    @property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @property
    def diameters(self) -> np.ndarray:
        """Longest edge of each triangle."""
        c = self.corners
        lengths = np.linalg.norm(c[:, [1, 2, 0]] - c[:, [2, 0, 1]], axis=2)
        return lengths.max(axis=1)

    @property
    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]], axis=1)

    def vertex_triangles(self) -> list[np.ndarray]:
        """Triangles incident to each vertex (unordered)."""
        flat = self.triangles.ravel()
        order = np.argsort(flat, kind="stable")
        split = np.searchsorted(flat[order], np.arange(1, self.n_vertices))
        return np.split(order // 3, split)

    def vertex_degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n_vertices)


@dataclass(frozen=True, eq=False)
class RefinementMap:
    """Provenance of a barycentric refinement.

    Attributes
    ----------
    parent_triangle : (6F,) parent of each child triangle
    vertex_kind : (V',) 0 = original vertex, 1 = edge midpoint, 2 = triangle barycentre
    vertex_source : (V',) index of the originating vertex, edge or triangle
    child_corner : (6F,) local index (0..2) in the parent of the original vertex the child touches
    """

    parent_triangle: np.ndarray
    vertex_kind: np.ndarray
    vertex_source: np.ndarray
    child_corner: np.ndarray

    def children(self, parent: int) -> np.ndarray:
        return np.arange(6 * parent, 6 * parent + 6)


def _icosahedron() -> tuple[np.ndarray, np.ndarray]:
    p = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
        [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
        [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1],
    ], dtype=float)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    return v / np.linalg.norm(v, axis=1)[:, None], f


def _midpoint_subdivide(v: np.ndarray, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pairs = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    key = np.minimum(pairs[:, 0], pairs[:, 1]) * len(v) + np.maximum(pairs[:, 0], pairs[:, 1])
    uniq, inv = np.unique(key, return_inverse=True)
    a, b = np.divmod(uniq, len(v))
    mid = 0.5 * (v[a] + v[b])
    m = inv.reshape(3, -1).T + len(v)  # midpoints of (01, 12, 20)
    new_f = np.concatenate([
        np.stack([f[:, 0], m[:, 0], m[:, 2]], axis=1),
        np.stack([f[:, 1], m[:, 1], m[:, 0]], axis=1),
        np.stack([f[:, 2], m[:, 2], m[:, 1]], axis=1),
        m,
    ])
    return np.concatenate([v, mid]), new_f


def generate_sphere(radius: float, subdivision_level: int) -> Mesh:
    """Icosphere: a subdivided icosahedron projected onto the sphere.

    The result has ``20 * 4**level`` outward-oriented triangles.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    if int(subdivision_level) != subdivision_level or subdivision_level < 0:
        raise ValueError("subdivision_level must be a nonnegative integer")
    v, f = _icosahedron()
    for _ in range(int(subdivision_level)):
        v, f = _midpoint_subdivide(v, f)
        v = v / np.linalg.norm(v, axis=1)[:, None]
    return Mesh.from_arrays(radius * v, f)


def load_mesh(path) -> Mesh:
    """Read the ``v x y z`` / ``f i j k`` (1-based) text subset of OBJ.

    Face entries of the form ``i/t/n`` are accepted; only the vertex index is used.
    """
    verts, faces = [], []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MeshError(f"cannot read mesh file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        try:
            if tag == "v":
                if len(rest) < 3:
                    raise ValueError("vertex needs 3 coordinates")
                verts.append([float(x) for x in rest[:3]])
            elif tag == "f":
                if len(rest) != 3:
                    raise ValueError("only triangular faces are supported")
                faces.append([int(x.split("/")[0]) - 1 for x in rest])
            elif tag in {"vn", "vt", "o", "g", "s", "usemtl", "mtllib"}:
                continue
            else:
                raise ValueError(f"unknown record '{tag}'")
        except ValueError as exc:
            raise MeshError(f"{path}:{lineno}: {exc}") from exc
    if not verts or not faces:
        raise MeshError(f"{path}: no vertices or faces found")
    return Mesh.from_arrays(np.array(verts), np.array(faces))


def save_mesh(mesh: Mesh, path) -> None:
    """Write a mesh in the text format read by :func:`load_mesh`."""
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def barycentric_refine(mesh: Mesh) -> tuple[Mesh, RefinementMap]:
    """Split every triangle into six around its barycentre.

    New vertices are not projected, so children are coplanar with their parent.
    Refined vertices are ordered: original vertices, edge midpoints, barycentres.
    Children of parent ``t`` are ``6t .. 6t+5``; child ``6t + 2a + s`` touches
    parent corner ``a`` (s = 0 on the side of edge ``a -> a+1``, s = 1 on the side
    of edge ``a-1 -> a``).
    """
    V, E, F = mesh.n_vertices, mesh.n_edges, mesh.n_triangles
    v = mesh.vertices
    mids = 0.5 * (v[mesh.edges[:, 0]] + v[mesh.edges[:, 1]])
    bary = mesh.centroids
    verts = np.concatenate([v, mids, bary])

    t = mesh.triangles
    te = mesh.triangle_edges
    b = V + E + np.arange(F)
    kids = np.empty((F, 6, 3), dtype=np.int64)
    corner = np.empty((F, 6), dtype=np.int64)
    for a in range(3):
        # edge a -> a+1 is the local edge opposite vertex a+2
        m_next = V + te[:, (a + 2) % 3]
        # edge a-1 -> a is the local edge opposite vertex a+1
        m_prev = V + te[:, (a + 1) % 3]
        kids[:, 2 * a] = np.stack([t[:, a], m_next, b], axis=1)
        kids[:, 2 * a + 1] = np.stack([t[:, a], b, m_prev], axis=1)
        corner[:, 2 * a] = a
        corner[:, 2 * a + 1] = a
    refined = Mesh.from_arrays(verts, kids.reshape(-1, 3))
    kind = np.concatenate([np.zeros(V, int), np.ones(E, int), np.full(F, 2)])
    source = np.concatenate([np.arange(V), np.arange(E), np.arange(F)])
    rmap = RefinementMap(np.repeat(np.arange(F), 6), kind, source, corner.ravel())
    return refined, rmap


def mesh_h(mesh: Mesh) -> float:
    """Largest triangle diameter (longest edge)."""
    return float(mesh.diameters.max())
