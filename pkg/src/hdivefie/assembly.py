"""Dense Galerkin matrices, right-hand sides and Gram matrices.

Everything is built from six bilinear forms between a test family ``f`` and a
trial family ``g`` on a common triangulation (``V = int G``):

``vv``  int int G f . g                 ``rv``  int int G (n x f) . g
``dd``  int int G div f div g           ``gd``  int f . grad V[div g]
``rg``  int (n x f) . grad V[div g]     ``mf``  int div f  n . int grad_x G x g

Well separated triangle pairs use a low-order point rule on both sides and are
swept in compiled code straight into function columns; near and touching pairs
use singularity subtraction at triangle level and are contracted through the
sparse half-coefficient matrices of the two families.  Mixed RWG/BC products
keep the RWG family on the coarse mesh; when it is the test family its near
pairs are integrated over the children of each coarse triangle, onto which it
restricts exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from . import _kernels
from .basis import BasisSpace, build_bc, build_rwg, refinement_matrix, restrict_to_refinement
from .mesh import Mesh, RefinementMap, barycentric_refine
from .quadrature import QuadratureSettings, gauss_triangle

__all__ = [
    "MediumParams",
    "PlaneWave",
    "ComplexDenseMatrix",
    "Spaces",
    "FormCache",
    "build_spaces",
    "bilinear_forms",
    "assemble_efie_l2",
    "assemble_rhs_l2",
    "assemble_efie_hdiv",
    "assemble_rhs_hdiv",
    "assemble_dual_efio",
    "assemble_single_layer",
    "assemble_gram",
    "dump_matrix",
    "load_matrix_dump",
    "FORMS",
]

FORMS = ("vv", "rv", "dd", "gd", "rg", "mf")
_FORM_INDEX = {f: i for i, f in enumerate(FORMS)}
RHS_DEGREE = 6


@dataclass(frozen=True)
class MediumParams:
    """Homogeneous background medium, angular frequency and H_div constant.

    ``c`` defaults to ``1/k**2``.
    """

    omega: float
    epsilon: float = 1.0
    mu: float = 1.0
    c: float | None = None

    def __post_init__(self):
        if not (self.epsilon > 0 and self.mu > 0):
            raise ValueError("epsilon and mu must be positive")
        if not (self.omega > 0 and math.isfinite(self.omega)):
            raise ValueError("omega must be positive and finite")
        if self.c is None:
            object.__setattr__(self, "c", 1.0 / self.k ** 2)
        if not self.c >= 0:
            raise ValueError("c must be nonnegative")

    @classmethod
    def from_k(cls, k: float, *, epsilon: float = 1.0, mu: float = 1.0, c: float | None = None,
               c_factor: float | None = None) -> "MediumParams":
        """Parameters for wavenumber ``k``; ``c_factor`` sets ``c = c_factor / k**2``."""
        if not k > 0:
            raise ValueError("k must be positive")
        if c_factor is not None:
            c = c_factor / k ** 2
        return cls(k / math.sqrt(epsilon * mu), epsilon, mu, c)

    @property
    def k(self) -> float:
        return self.omega * math.sqrt(self.epsilon * self.mu)

    def with_c(self, c: float) -> "MediumParams":
        return MediumParams(self.omega, self.epsilon, self.mu, c)


@dataclass(frozen=True)
class PlaneWave:
    """Incident plane wave ``E0 exp(i k_vec . x)``."""

    k_vec: np.ndarray
    E0: np.ndarray

    def __post_init__(self):
        kv = np.asarray(self.k_vec, dtype=float).reshape(3)
        e0 = np.asarray(self.E0, dtype=complex).reshape(3)
        scale = max(np.linalg.norm(kv) * np.linalg.norm(e0), 1e-300)
        if abs(np.dot(kv, e0)) > 1e-12 * scale:
            raise ValueError("polarization must be orthogonal to the propagation vector")
        object.__setattr__(self, "k_vec", kv)
        object.__setattr__(self, "E0", e0)

    @classmethod
    def along_z(cls, k: float) -> "PlaneWave":
        """The standard incidence k = (0, 0, k), E0 = (1, 0, 0)."""
        return cls(np.array([0.0, 0.0, k]), np.array([1.0, 0.0, 0.0]))

    @property
    def k(self) -> float:
        return float(np.linalg.norm(self.k_vec))

    def E(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.exp(1j * x @ self.k_vec)[:, None] * self.E0[None, :]

    def H(self, x, params: MediumParams) -> np.ndarray:
        """Magnetic field ``(k_vec x E0)/(omega mu) exp(i k_vec . x)``."""
        x = np.atleast_2d(x)
        H0 = np.cross(self.k_vec, self.E0) / (params.omega * params.mu)
        return np.exp(1j * x @ self.k_vec)[:, None] * H0[None, :]


@dataclass(frozen=True, eq=False)
class ComplexDenseMatrix:
    """A labelled dense matrix (or vector when ``data`` is 1-D)."""

    label: str
    data: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.data)):
            raise FloatingPointError(f"non-finite entries in {self.label}")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1] if self.data.ndim == 2 else 1

    @property
    def shape(self):
        return self.data.shape

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


@dataclass(frozen=True, eq=False)
class Spaces:
    """A mesh with its refinement and the RWG and BC families."""

    mesh: Mesh
    refined: Mesh
    refinement: RefinementMap
    rwg: BasisSpace
    bc: BasisSpace
    rwg_refined: BasisSpace

    @property
    def n(self) -> int:
        return self.rwg.n


def build_spaces(mesh: Mesh) -> Spaces:
    refined, rmap = barycentric_refine(mesh)
    rwg = build_rwg(mesh)
    return Spaces(mesh, refined, rmap, rwg, build_bc(mesh, refined, rmap), restrict_to_refinement(rwg, refined, rmap))


# ----------------------------------------------------------------------------
# geometry helpers


def _on_common_mesh(test: BasisSpace, trial: BasisSpace) -> tuple[BasisSpace, BasisSpace]:
    """Re-express a coarse family on the refinement used by the other one."""
    if test.mesh is trial.mesh:
        return test, trial
    if trial.refinement is not None and test.mesh is trial.parent:
        return restrict_to_refinement(test, trial.mesh, trial.refinement), trial
    if test.refinement is not None and trial.mesh is test.parent:
        return test, restrict_to_refinement(trial, test.mesh, test.refinement)
    raise ValueError("test and trial families live on unrelated meshes")


def _point_values(space: BasisSpace, degree: int):
    """Quadrature points of ``space.mesh`` and the functions sampled there.

    Returns points (P, 3), weights (P,), normals (P, 3), owning triangle (P,),
    values [3 x sparse (N, P)], rotated values n x f [3 x sparse (N, P)] and
    divergences sparse (N, P).
    """
    mesh = space.mesh
    rule = gauss_triangle(degree)
    F, nq = mesh.n_triangles, len(rule.weights)
    corners = mesh.corners
    pts = np.einsum("qa,tax->tqx", rule.points, corners).reshape(-1, 3)
    w = (rule.unit_weights[None, :] * mesh.areas[:, None]).ravel()
    tri = np.repeat(np.arange(F), nq)
    nrm = mesh.normals[tri]
    A = mesh.areas
    # half (t, a) at point (t, q): (x - p_a) / (2A)
    rows = (3 * np.arange(F)[:, None, None] + np.arange(3)[None, None, :]) * np.ones((1, nq, 1), int)
    cols = (np.arange(F)[:, None, None] * nq + np.arange(nq)[None, :, None]) * np.ones((1, 1, 3), int)
    diff = (pts.reshape(F, nq, 1, 3) - corners[:, None, :, :]) / (2.0 * A)[:, None, None, None]
    rot = np.cross(mesh.normals[:, None, None, :], diff)
    r, c = rows.ravel(), cols.ravel()
    shape = (3 * F, F * nq)
    vals = [space.coef @ sp.csr_matrix((diff[..., j].ravel(), (r, c)), shape=shape) for j in range(3)]
    rots = [space.coef @ sp.csr_matrix((rot[..., j].ravel(), (r, c)), shape=shape) for j in range(3)]
    dv = np.broadcast_to((1.0 / A)[:, None, None], (F, nq, 3)).ravel()
    div = space.coef @ sp.csr_matrix((dv, (r, c)), shape=shape)
    return pts, w, nrm, tri, vals, rots, div


def _near_pairs(mx: Mesh, my: Mesh, threshold: float) -> np.ndarray:
    """Pairs (X, Y) of test and trial triangles that are close or touching.

    On a common mesh touching is detected by shared vertices and the diagonal is
    always included.  Across a mesh and its refinement touching pairs are caught
    by the distance test, whose factor is therefore at least 1.5.
    """
    same = mx is my
    cx, cy = mx.centroids, my.centroids
    dx, dy = mx.diameters, my.diameters
    fac = threshold if same else max(threshold, 1.5)
    radius = max(fac, 1.5) * max(dx.max(), dy.max())
    lists = cKDTree(cx).query_ball_tree(cKDTree(cy), radius)
    X = np.repeat(np.arange(len(lists)), [len(l) for l in lists])
    Y = np.fromiter((y for l in lists for y in l), dtype=np.int64, count=len(X))
    dist = np.linalg.norm(cx[X] - cy[Y], axis=1)
    keep = dist < fac * np.maximum(dx[X], dy[Y])
    if same:
        tri = mx.triangles
        keep |= (tri[X][:, :, None] == tri[Y][:, None, :]).any(axis=(1, 2))
    out = np.stack([X[keep], Y[keep]], 1)
    order = np.lexsort((out[:, 1], out[:, 0]))
    return np.ascontiguousarray(out[order], dtype=np.int64)


def _trial_csr(space: BasisSpace):
    """Per-triangle (function, alpha, beta) lists: on Y, g_j = alpha y - beta."""
    mesh = space.mesh
    C = sp.coo_matrix(space.coef)
    tri = C.col // 3
    a = C.col % 3
    A2 = 2.0 * mesh.areas[tri]
    key = tri.astype(np.int64) * space.n + C.row
    uniq, inv = np.unique(key, return_inverse=True)
    alpha = np.zeros(len(uniq))
    beta = np.zeros((len(uniq), 3))
    np.add.at(alpha, inv, C.data / A2)
    np.add.at(beta, inv, (C.data / A2)[:, None] * mesh.corners[tri, a])
    ytri = uniq // space.n
    fidx = (uniq % space.n).astype(np.int64)
    ptr = np.zeros(mesh.n_triangles + 1, dtype=np.int64)
    np.add.at(ptr, ytri + 1, 1)
    return np.cumsum(ptr), fidx, alpha, beta


# ----------------------------------------------------------------------------
# bilinear forms


class FormCache:
    """Memo of assembled bilinear forms keyed by family identity, k and settings."""

    def __init__(self):
        self._store: dict = {}

    def get(self, key):
        return self._store.get(key)

    def put(self, key, value):
        self._store[key] = value

    def clear(self):
        self._store.clear()


def bilinear_forms(test: BasisSpace, trial: BasisSpace, k: float, forms,
                   settings: QuadratureSettings = QuadratureSettings(),
                   cache: FormCache | None = None, chunk_bytes: float = 6e7) -> dict[str, np.ndarray]:
    """Dense (N_test, N_trial) matrices of the requested forms."""
    forms = tuple(sorted(set(forms), key=FORMS.index))
    for f in forms:
        if f not in _FORM_INDEX:
            raise ValueError(f"unknown form {f!r}")
    key = (id(test.coef), id(trial.coef), float(k), settings)
    if cache is not None:
        have = cache.get(key) or {}
        missing = [f for f in forms if f not in have]
        if not missing:
            return {f: have[f] for f in forms}
        new = _compute_forms(test, trial, float(k), missing, settings, chunk_bytes)
        have = {**have, **new}
        cache.put(key, have)
        return {f: have[f] for f in forms}
    return _compute_forms(test, trial, float(k), forms, settings, chunk_bytes)


def _compute_forms(test, trial, k, forms, settings, chunk_bytes):
    if not (test.mesh is trial.mesh or test.parent is trial.mesh or trial.parent is test.mesh):
        raise ValueError("test and trial families live on unrelated meshes")
    Nt, Ns = test.n, trial.n
    out = {f: np.zeros((Nt, Ns), dtype=complex) for f in forms}
    pairs = _near_pairs(test.mesh, trial.mesh, settings.near_threshold)
    same = test.mesh is trial.mesh and (test.coef is trial.coef or (
        test.coef.shape == trial.coef.shape and (test.coef != trial.coef).nnz == 0))
    upper = same and set(forms) <= {"vv", "dd"}
    _far_field(test, trial, k, forms, settings, pairs, out, chunk_bytes, upper)
    near = _near_field(test, trial, k, forms, settings, pairs)
    for f in forms:
        Z = near[f]
        if upper:
            out[f] = out[f] + out[f].T
            Z = 0.5 * (Z + Z.T)
        out[f] += Z
    return out


def _far_field(test, trial, k, forms, settings, pairs, out, chunk_bytes, upper=False):
    F = test.mesh.n_triangles
    ymesh = trial.mesh
    N = trial.n
    pts, w, nrm, xtri, vals, rots, div = _point_values(test, settings.far_degree)
    rule = gauss_triangle(settings.far_degree)
    ypts = np.ascontiguousarray(np.einsum("qa,tax->tqx", rule.points, ymesh.corners))
    yw = np.ascontiguousarray(rule.unit_weights[None, :] * ymesh.areas[:, None])
    fptr, fidx, falpha, fbeta = _trial_csr(trial)
    near_ptr = np.searchsorted(pairs[:, 0], np.arange(F + 1)).astype(np.int64)
    near_idx = np.ascontiguousarray(pairs[:, 1])

    want_v = "vv" in forms or "rv" in forms
    want_d = "dd" in forms
    want_g = "gd" in forms or "rg" in forms
    want_m = "mf" in forms
    per_row = N * 16 * (3 * want_v + want_d + 3 * want_g + want_m)
    P = len(w)
    pc = int(max(32, min(P, chunk_bytes // max(per_row, 1))))

    W = sp.diags(w)
    tv = [(W @ v.T).tocsr() for v in vals]
    tr = [(W @ v.T).tocsr() for v in rots]
    td = (W @ div.T).tocsr()
    mark = np.zeros(ymesh.n_triangles, dtype=np.bool_)
    dummy3 = np.zeros((3, 1, 1), dtype=complex)
    dummy1 = np.zeros((1, 1), dtype=complex)
    for p0 in range(0, P, pc):
        p1 = min(P, p0 + pc)
        n = p1 - p0
        acc_v = np.zeros((3, n, N), dtype=complex) if want_v else dummy3
        acc_d = np.zeros((n, N), dtype=complex) if want_d else dummy1
        acc_g = np.zeros((3, n, N), dtype=complex) if want_g else dummy3
        acc_m = np.zeros((n, N), dtype=complex) if want_m else dummy1
        _kernels.far_sweep(pts, nrm, xtri, p0, p1, near_ptr, near_idx, ypts, yw, fptr, fidx, falpha, fbeta, k,
                           want_v, want_d, want_g, want_m, acc_v, acc_d, acc_g, acc_m, mark, upper)
        sl = slice(p0, p1)
        if "vv" in forms:
            out["vv"] += sum((tv[j][sl].T @ acc_v[j]) for j in range(3))
        if "rv" in forms:
            out["rv"] += sum((tr[j][sl].T @ acc_v[j]) for j in range(3))
        if want_d:
            out["dd"] += td[sl].T @ acc_d
        if "gd" in forms:
            out["gd"] += sum((tv[j][sl].T @ acc_g[j]) for j in range(3))
        if "rg" in forms:
            out["rg"] += sum((tr[j][sl].T @ acc_g[j]) for j in range(3))
        if want_m:
            out["mf"] += td[sl].T @ acc_m


def _geometry_arrays(mesh):
    return (np.ascontiguousarray(mesh.corners), np.ascontiguousarray(mesh.normals),
            np.ascontiguousarray(mesh.areas))


def _near_field(test, trial, k, forms, settings, pairs, chunk=20000):
    Ct = test.coef
    if trial.parent is test.mesh:
        # coarse test points would sit on refined edges where the trial potential
        # gradient is singular: integrate over the children instead
        Ct = (Ct @ refinement_matrix(test.mesh, trial.mesh, trial.refinement)).tocsr()
        pairs = np.stack([np.repeat(6 * pairs[:, 0], 6) + np.tile(np.arange(6), len(pairs)),
                          np.repeat(pairs[:, 1], 6)], 1).astype(np.int64)
        xmesh = trial.mesh
    else:
        xmesh = test.mesh
    xg = _geometry_arrays(xmesh)
    yg = _geometry_arrays(trial.mesh)
    Fx, Fy = xmesh.n_triangles, trial.mesh.n_triangles
    ob, ow = (np.ascontiguousarray(a) for a in settings.near_outer_rule())
    irule = gauss_triangle(settings.inner_degree)
    ib, iw = np.ascontiguousarray(irule.points), np.ascontiguousarray(irule.unit_weights)
    Ct = Ct.tocsc()
    Cs = trial.coef.tocsc()
    res = {f: np.zeros((test.n, trial.n), dtype=complex) for f in forms}
    idx = [_FORM_INDEX[f] for f in forms]
    a_off = np.repeat(np.arange(3), 3)
    b_off = np.tile(np.arange(3), 3)
    for s in range(0, len(pairs), chunk):
        pr = np.ascontiguousarray(pairs[s:s + chunk])
        blk = np.zeros((len(pr), 6, 3, 3), dtype=complex)
        _kernels.near_blocks(*xg, *yg, pr, ob, ow, ib, iw, k, True, blk)
        rows = (3 * pr[:, 0][:, None] + a_off[None, :]).ravel()
        cols = (3 * pr[:, 1][:, None] + b_off[None, :]).ravel()
        for f, i in zip(forms, idx):
            S = sp.csr_matrix((blk[:, i].reshape(-1), (rows, cols)), shape=(3 * Fx, 3 * Fy))
            res[f] += (Ct @ S @ Cs.T).toarray()
    return res


# ----------------------------------------------------------------------------
# public assembly


def _matrix(label, data):
    return ComplexDenseMatrix(label, np.ascontiguousarray(data))


def assemble_efie_l2(mesh: Mesh, rwg: BasisSpace, params: MediumParams, *,
                     settings: QuadratureSettings = QuadratureSettings(),
                     cache: FormCache | None = None) -> ComplexDenseMatrix:
    """``(n x t_i, n x Q t_j)`` with both derivatives moved onto divergences."""
    if rwg.mesh is not mesh:
        raise ValueError("basis does not live on the given mesh")
    return _l2_form("A_L2", rwg, rwg, params, settings, cache)


def _l2_form(label, test, trial, params, settings, cache):
    z = bilinear_forms(test, trial, params.k, ("vv", "dd"), settings, cache)
    w, eps, mu = params.omega, params.epsilon, params.mu
    return _matrix(label, 1j * w * mu * z["vv"] - (1j / (w * eps)) * z["dd"])


def _hdiv_form(label, test, trial, params, settings, cache):
    z = bilinear_forms(test, trial, params.k, ("rv", "rg", "mf"), settings, cache)
    w, eps, mu = params.omega, params.epsilon, params.mu
    data = -1j * w * mu * z["rv"] - (1j / (w * eps)) * z["rg"]
    if params.c:
        data = data - 1j * w * mu * params.c * z["mf"]
    return _matrix(label, data)


def assemble_efie_hdiv(mesh: Mesh, rwg: BasisSpace, bc_space: BasisSpace, params: MediumParams, *,
                       settings: QuadratureSettings = QuadratureSettings(),
                       cache: FormCache | None = None) -> ComplexDenseMatrix:
    """BC-tested EFIE plus ``c`` times the normal magnetic field tested with divergences."""
    if bc_space.parent is not mesh or rwg.mesh is not mesh:
        raise ValueError("bc_space must be built on the barycentric refinement of mesh")
    return _hdiv_form("A_Hdiv", bc_space, rwg, params, settings, cache)


def assemble_dual_efio(variant: str, mesh: Mesh, rwg: BasisSpace, bc_space: BasisSpace, params: MediumParams, *,
                       settings: QuadratureSettings = QuadratureSettings(),
                       cache: FormCache | None = None) -> ComplexDenseMatrix:
    """EFIE matrices with BC trial functions: ``L2`` (n x s testing) or ``Hdiv`` (RWG testing)."""
    if variant == "L2":
        return _l2_form("A'_L2", bc_space, bc_space, params, settings, cache)
    if variant == "Hdiv":
        return _hdiv_form("A'_Hdiv", rwg, bc_space, params, settings, cache)
    raise ValueError(f"unknown variant {variant!r}")


def assemble_single_layer(mesh: Mesh, bc_space: BasisSpace, params: MediumParams, *,
                          settings: QuadratureSettings = QuadratureSettings(),
                          cache: FormCache | None = None) -> ComplexDenseMatrix:
    """``(n x s_i, i omega eps n x int G s_j)``."""
    z = bilinear_forms(bc_space, bc_space, params.k, ("vv",), settings, cache)
    return _matrix("S_L2", 1j * params.omega * params.epsilon * z["vv"])


def _local_grams(mesh: Mesh):
    """Exact per-triangle half matrices: mass, rotated mass (n x h_a, h_b), divergence."""
    c = mesh.corners
    A = mesh.areas
    n = mesh.normals
    # int_T (x - p_a).(x - p_b) with x = sum lambda_i c_i; int lambda_i lambda_j = A (1 + delta)/12
    E = np.full((3, 3), 1.0 / 12.0) + np.eye(3) / 12.0
    D = c[:, None, :, :] - c[:, :, None, :]  # D[t, a, i] = c_i - p_a
    mass = np.einsum("ij,taix,tbjx->tab", E, D, D) * (A / (4.0 * A * A))[:, None, None]
    rD = np.cross(n[:, None, None, :], D)
    rot = np.einsum("ij,taix,tbjx->tab", E, rD, D) * (A / (4.0 * A * A))[:, None, None]
    div = np.broadcast_to((1.0 / A)[:, None, None], (len(A), 3, 3))
    return mass, rot, div


def _block_sparse(blocks):
    F = blocks.shape[0]
    r = (3 * np.arange(F)[:, None, None] + np.arange(3)[None, :, None]) * np.ones((1, 1, 3), int)
    cc = (3 * np.arange(F)[:, None, None] + np.arange(3)[None, None, :]) * np.ones((1, 3, 1), int)
    return sp.csr_matrix((blocks.ravel(), (r.ravel(), cc.ravel())), shape=(3 * F, 3 * F))


def _gram(test: BasisSpace, trial: BasisSpace, kind: str, c: float = 0.0) -> np.ndarray:
    test, trial = _on_common_mesh(test, trial)
    mass, rot, div = _local_grams(test.mesh)
    if kind == "rot":
        K = _block_sparse(rot)
    else:
        K = _block_sparse(mass)
        if c:
            K = K + c * _block_sparse(np.ascontiguousarray(div))
    return (test.coef @ K @ trial.coef.T).toarray()


GRAM_VARIANTS = ("T_L2", "T'_L2", "T''_L2", "T_Hdiv", "T'_Hdiv")


def assemble_gram(variant: str, spaces: Spaces, params: MediumParams | None = None) -> ComplexDenseMatrix:
    """Gram matrices pairing the RWG and BC families.

    ``T_L2 = (n x s_i, t_j)``, ``T'_L2 = (n x t_i, s_j)``, ``T''_L2 = (s_i, s_j)``,
    ``T_Hdiv = (t_i, t_j)_Hdiv`` and ``T'_Hdiv = (s_i, s_j)_Hdiv`` with
    ``(u, v)_Hdiv = (u, v) + c (div u, div v)``.
    """
    if variant == "T_L2":
        data = _gram(spaces.bc, spaces.rwg, "rot")
    elif variant == "T'_L2":
        data = _gram(spaces.rwg, spaces.bc, "rot")
    elif variant == "T''_L2":
        data = _gram(spaces.bc, spaces.bc, "mass")
    elif variant in ("T_Hdiv", "T'_Hdiv"):
        if params is None:
            raise ValueError(f"{variant} needs MediumParams for the constant c")
        sp_ = spaces.rwg if variant == "T_Hdiv" else spaces.bc
        data = _gram(sp_, sp_, "mass", params.c)
    else:
        raise ValueError(f"unknown Gram variant {variant!r}; choose from {GRAM_VARIANTS}")
    return _matrix(variant, data.astype(complex))


# ----------------------------------------------------------------------------
# right-hand sides


def _rhs_samples(space: BasisSpace):
    pts, w, nrm, _, vals, rots, div = _point_values(space, RHS_DEGREE)
    return pts, w, nrm, vals, rots, div


def assemble_rhs_l2(mesh: Mesh, rwg: BasisSpace, wave: PlaneWave) -> ComplexDenseMatrix:
    """``(n x t_i, E_inc x n)``."""
    pts, w, nrm, _, rots, _ = _rhs_samples(rwg)
    Exn = np.cross(wave.E(pts), nrm)
    b = sum(rots[j] @ (w * Exn[:, j]) for j in range(3))
    return _matrix("b_L2", np.asarray(b).ravel())


def assemble_rhs_hdiv(mesh: Mesh, bc_space: BasisSpace, wave: PlaneWave, params: MediumParams) -> ComplexDenseMatrix:
    """``(s_i, E_inc x n) + i omega mu c (div s_i, n . H_inc)``."""
    pts, w, nrm, vals, _, div = _rhs_samples(bc_space)
    Exn = np.cross(wave.E(pts), nrm)
    b = sum(vals[j] @ (w * Exn[:, j]) for j in range(3))
    if params.c:
        nH = np.einsum("pj,pj->p", nrm, wave.H(pts, params))
        b = b + 1j * params.omega * params.mu * params.c * (div @ (w * nH))
    return _matrix("b_Hdiv", np.asarray(b).ravel())


# ----------------------------------------------------------------------------
# debugging dumps


def dump_matrix(matrix, prefix) -> tuple[Path, Path]:
    """Write ``prefix.txt`` (``i j re im`` per nonzero) and ``prefix.bin``.

    The binary holds the nonzero count and the matrix shape, then rows, cols, real
    and imaginary parts, all as little-endian float64.
    """
    data = np.asarray(matrix.data if isinstance(matrix, ComplexDenseMatrix) else matrix)
    if data.ndim == 1:
        data = data[:, None]
    i, j = np.nonzero(data)
    v = data[i, j]
    prefix = Path(prefix)
    txt = prefix.with_suffix(".txt")
    binp = prefix.with_suffix(".bin")
    with open(txt, "w") as fh:
        fh.write(f"# {data.shape[0]} {data.shape[1]}\n")
        for a, b, z in zip(i, j, v):
            fh.write(f"{a} {b} {z.real:.17g} {z.imag:.17g}\n")
    arr = np.concatenate([[len(v), data.shape[0], data.shape[1]], i, j, v.real, v.imag]).astype("<f8")
    arr.tofile(binp)
    return txt, binp


def load_matrix_dump(path) -> np.ndarray:
    """Read back a binary dump written by :func:`dump_matrix`."""
    arr = np.fromfile(Path(path), dtype="<f8")
    nnz, nr, nc = (int(x) for x in arr[:3])
    i, j, re, im = (arr[3 + q * nnz:3 + (q + 1) * nnz] for q in range(4))
    out = np.zeros((nr, nc), dtype=complex)
    out[i.astype(int), j.astype(int)] = re + 1j * im
    return out
