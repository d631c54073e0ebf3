"""RWG and Buffa-Christiansen function families, loops and stars.

Every family is stored as a sparse matrix of coefficients over the *halves* of
a mesh: column ``3*t + a`` is the field ``(x - p_a) / (2 A_t)`` on triangle ``t``
(unit outward flux through the edge opposite corner ``a``).  A coefficient is
therefore the outward flux of the function through that edge, which makes
normal continuity across edges a statement about matching coefficients.

RWG functions live on the original mesh, BC functions on its barycentric
refinement.  Both are normalised to unit supremum; ``scale`` converts back to the
classic normalisation (edge-length RWG, unit-flux BC).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, RefinementMap

__all__ = [
    "BasisSpace",
    "LoopStarTransform",
    "BasisError",
    "build_rwg",
    "build_bc",
    "restrict_to_refinement",
    "build_loop_star",
    "evaluate",
    "surface_divergence",
    "half_sup",
    "refinement_matrix",
    "expand_in_rwg",
]


class BasisError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BasisSpace:
    """A family of div-conforming RT0 functions on ``mesh``.

    ``coef`` is an (N, 3F) CSR matrix over the halves of ``mesh``; ``scale[i]``
    multiplies function ``i`` back to its classic normalisation.  For BC spaces
    ``parent`` is the coarse mesh whose edges index the functions.
    """

    kind: str
    mesh: Mesh
    coef: sp.csr_matrix
    scale: np.ndarray
    parent: Mesh | None = None
    refinement: RefinementMap | None = None

    @property
    def n(self) -> int:
        return self.coef.shape[0]

    def support(self, i: int) -> np.ndarray:
        """Triangles of ``mesh`` on which function ``i`` is nonzero."""
        row = self.coef.getrow(i)
        cols = row.indices[np.abs(row.data) > 0]
        return np.unique(cols // 3)

    def divergence_matrix(self) -> sp.csr_matrix:
        """(N, F) piecewise-constant surface divergence per triangle."""
        F = self.mesh.n_triangles
        S = sp.csr_matrix((np.ones(3 * F), (np.arange(3 * F), np.repeat(np.arange(F), 3))), shape=(3 * F, F))
        return (self.coef @ S @ sp.diags(1.0 / self.mesh.areas)).tocsr()


@dataclass(frozen=True, eq=False)
class LoopStarTransform:
    """Loop and star coefficient matrices in the coordinates of a basis space."""

    loop: sp.csr_matrix
    star: sp.csr_matrix

    @property
    def n_loop(self) -> int:
        return self.loop.shape[1]

    @property
    def n_star(self) -> int:
        return self.star.shape[1]

    def matrix(self) -> sp.csr_matrix:
        return sp.hstack([self.loop, self.star]).tocsr()


def _halves_from_flux(mesh: Mesh, edge_flux: sp.spmatrix) -> sp.csr_matrix:
    """Half coefficients of functions given by left-to-right edge fluxes (M, E)."""
    E, F = mesh.n_edges, mesh.n_triangles
    rows, cols, vals = [], [], []
    te, ts = mesh.triangle_edges, mesh.triangle_edge_signs
    # matrix (E, 3F): edge flux -> outward flux of each triangle through that edge
    t_idx = np.repeat(np.arange(F), 3)
    a_idx = np.tile(np.arange(3), F)
    rows = te.ravel()
    cols = 3 * t_idx + a_idx
    vals = ts.ravel().astype(float)
    P = sp.csr_matrix((vals, (rows, cols)), shape=(E, 3 * F))
    return (sp.csr_matrix(edge_flux) @ P).tocsr()


def half_sup(mesh: Mesh, coef: sp.spmatrix) -> np.ndarray:
    """Exact supremum of |f| for each row of a half-coefficient matrix.

    A linear field attains its maximum modulus at a triangle corner.
    """
    C = sp.coo_matrix(coef)
    if C.nnz == 0:
        return np.zeros(C.shape[0])
    tri = C.col // 3
    a = C.col % 3
    key = C.row.astype(np.int64) * mesh.n_triangles + tri
    uniq, inv = np.unique(key, return_inverse=True)
    dense = np.zeros((len(uniq), 3))
    np.add.at(dense, (inv, a), C.data)
    rows = uniq // mesh.n_triangles
    tris = uniq % mesh.n_triangles
    c = mesh.corners[tris]  # (K, 3, 3)
    # value at corner b: sum_a C_a (c_b - c_a) / 2A
    diff = c[:, :, None, :] - c[:, None, :, :]  # [K, b, a, xyz]
    val = np.einsum("ka,kbax->kbx", dense, diff) / (2.0 * mesh.areas[tris])[:, None, None]
    mags = np.linalg.norm(val, axis=2).max(axis=1)
    out = np.zeros(C.shape[0])
    np.maximum.at(out, rows, mags)
    return out


def _normalise(mesh: Mesh, coef: sp.csr_matrix) -> tuple[sp.csr_matrix, np.ndarray]:
    s = half_sup(mesh, coef)
    if np.any(s <= 0):
        raise BasisError("basis function with empty support")
    return (sp.diags(1.0 / s) @ coef).tocsr(), s


def build_rwg(mesh: Mesh) -> BasisSpace:
    """One RWG function per edge, flowing from the left to the right triangle, sup = 1.

    ``scale[i]`` is the factor turning the function into the classic RWG whose
    flux through its edge equals the edge length.
    """
    E = mesh.n_edges
    flux = sp.identity(E, format="csr")
    coef, s = _normalise(mesh, _halves_from_flux(mesh, flux))
    # normalised flux through the defining edge is 1/s; classic flux is l
    scale = mesh.edge_lengths * s
    return BasisSpace("RWG", mesh, coef, scale)


def refinement_matrix(mesh: Mesh, refined: Mesh, rmap: RefinementMap) -> sp.csr_matrix:
    """(3F, 6*3F) exact restriction of coarse halves to the refined halves."""
    F = mesh.n_triangles
    rows, cols, vals = [], [], []
    rc = refined.corners
    for t in range(F):
        p = mesh.corners[t]
        A = mesh.areas[t]
        n = mesh.normals[t]
        for child in rmap.children(t):
            c = rc[child]
            for b in range(3):
                q1, q2 = c[(b + 1) % 3], c[(b + 2) % 3]
                nu = np.cross(q2 - q1, n)  # outward normal times edge length
                for a in range(3):
                    rows.append(3 * t + a)
                    cols.append(3 * child + b)
                    vals.append(np.dot(q1 - p[a], nu) / (2.0 * A))
    R = sp.csr_matrix((vals, (rows, cols)), shape=(3 * F, 3 * refined.n_triangles))
    R.eliminate_zeros()
    return R


def restrict_to_refinement(space: BasisSpace, refined: Mesh, rmap: RefinementMap) -> BasisSpace:
    """The same functions expressed on the barycentric refinement (exact)."""
    R = refinement_matrix(space.mesh, refined, rmap)
    coef = (space.coef @ R).tocsr()
    coef.data[np.abs(coef.data) < 1e-15 * np.abs(coef.data).max()] = 0.0
    coef.eliminate_zeros()
    return BasisSpace(space.kind, refined, coef, space.scale, parent=space.mesh, refinement=rmap)


def _cells(mesh: Mesh, refined: Mesh, rmap: RefinementMap):
    """Children around each coarse vertex in counter-clockwise order, keyed by spoke end."""
    cells = [dict() for _ in range(mesh.n_vertices)]
    tri = refined.triangles
    for child in range(refined.n_triangles):
        v, w1, w2 = tri[child]
        cells[v][w1] = (child, w2)
    return cells


def build_bc(mesh: Mesh, refined: Mesh, rmap: RefinementMap) -> BasisSpace:
    """Buffa-Christiansen functions, one per coarse edge, on the barycentric refinement.

    The function of edge ``(v_a, v_b)`` carries unit flux from the dual cell of
    ``v_a`` to that of ``v_b``, split equally over the two refined edges that
    cross the coarse edge.  Inside each cell every child receives the same share
    ``1/(2N)`` of the charge (N = vertex degree) and the spoke along the coarse
    edge carries no flux, which yields the classic ``(N - j)/(2N)`` spoke pattern.
    """
    if refined.n_triangles != 6 * mesh.n_triangles or len(rmap.parent_triangle) != refined.n_triangles:
        raise BasisError("refined mesh does not match the coarse mesh")
    V = mesh.n_vertices
    cells = _cells(mesh, refined, rmap)
    rows, cols, vals = [], [], []
    for e, (va, vb) in enumerate(mesh.edges):
        mid = V + e
        for v, q in ((va, 1.0), (vb, -1.0)):
            cell = cells[v]
            nn = len(cell)  # 2N children
            w = mid
            chain = []
            for _ in range(nn):
                child, w_next = cell[w]
                chain.append(child)
                w = w_next
            if w != mid:
                raise BasisError(f"dual cell of vertex {v} is not a closed fan")
            flux = q * (np.arange(nn + 1) / nn - 0.5)  # CCW spoke flux F_j
            flux[0] = flux[nn] = 0.0
            for j, child in enumerate(chain):
                out_outer = 0.5 * q if j in (0, nn - 1) else 0.0
                # local 2 is opposite spoke j, local 1 opposite spoke j+1, local 0 opposite the rim
                for a, val in ((0, out_outer), (1, flux[j + 1]), (2, -flux[j])):
                    if val != 0.0:
                        rows.append(e)
                        cols.append(3 * child + a)
                        vals.append(val)
    raw = sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_edges, 3 * refined.n_triangles))
    coef, s = _normalise(refined, raw)
    return BasisSpace("BC", refined, coef, s, parent=mesh, refinement=rmap)


def expand_in_rwg(space: BasisSpace, rwg: BasisSpace | None = None) -> sp.csr_matrix:
    """Coefficients (N, E) of ``space`` in the RWG family of its own mesh.

    Each edge owns one half on its left triangle, so the coefficient of RWG ``e``
    is the ratio of the two half coefficients there.
    """
    mesh = space.mesh
    rwg = rwg or build_rwg(mesh)
    if rwg.mesh is not mesh or rwg.kind != "RWG":
        raise BasisError("expansion needs the RWG family of the same mesh")
    left = mesh.edge_triangles[:, 0]
    local = np.argmax(mesh.triangle_edges[left] == np.arange(mesh.n_edges)[:, None], axis=1)
    halves = 3 * left + local
    own = np.asarray(rwg.coef[np.arange(mesh.n_edges), halves]).ravel()
    X = (space.coef[:, halves] @ sp.diags(1.0 / own)).tocsr()
    X.eliminate_zeros()
    return X


def _loop_star_flux(mesh: Mesh) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Edge fluxes (E x V, E x F) of vertex loops and triangle stars."""
    E = mesh.n_edges
    e = np.arange(E)
    loop = sp.csr_matrix((np.concatenate([-np.ones(E), np.ones(E)]),
                          (np.concatenate([e, e]), np.concatenate([mesh.edges[:, 0], mesh.edges[:, 1]]))),
                         shape=(E, mesh.n_vertices))
    te, ts = mesh.triangle_edges, mesh.triangle_edge_signs
    star = sp.csr_matrix((ts.ravel().astype(float), (te.ravel(), np.repeat(np.arange(mesh.n_triangles), 3))),
                         shape=(E, mesh.n_triangles))
    return loop, star


def _renormalise_columns(space: BasisSpace, M: sp.csr_matrix) -> sp.csr_matrix:
    s = half_sup(space.mesh, (M.T @ space.coef).tocsr())
    return (M @ sp.diags(1.0 / s)).tocsr()


def build_loop_star(space: BasisSpace, mesh: Mesh | None = None) -> LoopStarTransform:
    """Loop and star families in the coordinates of ``space``.

    RWG: loops are surface curls of vertex hat functions, stars are unit outflow
    combinations around a triangle.  BC: loops circulate around coarse triangles
    (dual vertices) and stars flow out of the dual cell of a coarse vertex.  The
    highest-index loop and star are dropped; columns are renormalised to sup = 1.
    """
    if space.kind == "RWG":
        mesh = mesh or space.mesh
        loop, star = _loop_star_flux(mesh)
        # coefficients in the sup-normalised RWG functions: flux / (flux of t_e)
        flux_of_t = space.scale / mesh.edge_lengths  # = sup of the unit-flux function
        D = sp.diags(flux_of_t)
        loop = (D @ loop).tocsr()[:, :-1]
        star = (D @ star).tocsr()[:, :-1]
        expected = (mesh.n_vertices - 1, mesh.n_triangles - 1)
    elif space.kind == "BC":
        coarse = space.parent
        E = coarse.n_edges
        te, ts = coarse.triangle_edges, coarse.triangle_edge_signs
        loop = sp.csr_matrix((ts.ravel().astype(float), (te.ravel(), np.repeat(np.arange(coarse.n_triangles), 3))),
                             shape=(E, coarse.n_triangles))
        e = np.arange(E)
        star = sp.csr_matrix((np.concatenate([np.ones(E), -np.ones(E)]),
                              (np.concatenate([e, e]), np.concatenate([coarse.edges[:, 0], coarse.edges[:, 1]]))),
                             shape=(E, coarse.n_vertices))
        D = sp.diags(space.scale)
        loop = (D @ loop).tocsr()[:, :-1]
        star = (D @ star).tocsr()[:, :-1]
        expected = (coarse.n_triangles - 1, coarse.n_vertices - 1)
    else:
        raise BasisError(f"unknown basis kind {space.kind}")
    loop = _renormalise_columns(space, loop)
    star = _renormalise_columns(space, star)
    tr = LoopStarTransform(loop, star)
    if (tr.n_loop, tr.n_star) != expected or tr.n_loop + tr.n_star != space.n:
        raise BasisError(f"loop/star counts {tr.n_loop}+{tr.n_star} do not match N={space.n} "
                         f"(expected {expected[0]}+{expected[1]}; genus > 0?)")
    return tr


def _check_index(space: BasisSpace, i: int, triangle: int):
    if not 0 <= i < space.n:
        raise IndexError(f"function index {i} out of range [0, {space.n})")
    if not 0 <= triangle < space.mesh.n_triangles:
        raise IndexError(f"triangle index {triangle} out of range")


def evaluate(space: BasisSpace, i: int, triangle: int, bary) -> np.ndarray:
    """Value of function ``i`` at barycentric point ``bary`` of ``triangle`` (of ``space.mesh``)."""
    _check_index(space, i, triangle)
    c = space.mesh.corners[triangle]
    x = np.asarray(bary, dtype=float) @ c
    coeffs = space.coef[i, 3 * triangle:3 * triangle + 3].toarray().ravel()
    return (coeffs[:, None] * (x[None, :] - c)).sum(axis=0) / (2.0 * space.mesh.areas[triangle])


def surface_divergence(space: BasisSpace, i: int, triangle: int) -> float:
    """Constant surface divergence of function ``i`` on ``triangle``."""
    _check_index(space, i, triangle)
    coeffs = space.coef[i, 3 * triangle:3 * triangle + 3].toarray().ravel()
    return float(coeffs.sum() / space.mesh.areas[triangle])
