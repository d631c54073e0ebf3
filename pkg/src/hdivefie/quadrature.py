"""Triangle quadrature and singular pair integration.

Pair integrals are double integrals over two flat triangles of the Helmholtz
kernel ``G(r) = exp(ikr) / (4 pi r)`` or its gradient, contracted with linear
vector traces.  Separated pairs use a plain product rule.  Near pairs subtract
the static part ``1/(4 pi r)``, integrate it in closed form over the inner
triangle and integrate the bounded remainder ``(exp(ikr) - 1)/(4 pi r)`` with a
Gauss rule.  Touching pairs (shared vertex, shared edge, identical) use the same
inner treatment and a double-exponential (tanh-sinh) outer rule in collapsed
coordinates, which absorbs the logarithmic edge behaviour of the inner potential.

Here the remainder is integrated on three subtriangles with apex at the
projected observation point, with sinh substitutions in the radial and angular
directions that resolve the length scales set by the height of the point and
its distance to the far edge.  Matrix assembly uses a fixed inner rule for the
remainder instead, which is ample when ``k h`` is small.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from . import _kernels

__all__ = [
    "TriangleRule",
    "PairCase",
    "PairIntegrationPlan",
    "QuadratureSettings",
    "green",
    "gauss_triangle",
    "tanh_sinh_square",
    "classify_pair",
    "plan_pair",
    "integrate_pair",
    "static_integrals",
]

SUPPORTED_DEGREES = tuple(range(1, 11))


@dataclass(frozen=True)
class TriangleRule:
    """Quadrature rule on the reference triangle (0,0), (1,0), (0,1).

    ``points`` are barycentric coordinates (n, 3); ``weights`` sum to the
    reference area 1/2.
    """

    degree: int
    points: np.ndarray
    weights: np.ndarray

    def map(self, corners: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Physical points and weights on a triangle given by its (3, 3) corners."""
        corners = np.asarray(corners, dtype=float)
        area = 0.5 * np.linalg.norm(np.cross(corners[1] - corners[0], corners[2] - corners[0]))
        return self.points @ corners, self.weights * (2.0 * area)

    @property
    def unit_weights(self) -> np.ndarray:
        """Weights normalised to sum to one (multiply by the physical area)."""
        return 2.0 * self.weights


def _sym3(a, b, w):
    return [(a, b, b), (b, a, b), (b, b, a)], [w] * 3


def _dunavant(degree: int):
    if degree == 1:
        return [(1 / 3, 1 / 3, 1 / 3)], [1.0]
    if degree == 2:
        pts, w = _sym3(2 / 3, 1 / 6, 1 / 3)
        return pts, w
    if degree in (3, 4):
        p1, w1 = _sym3(0.108103018168070, 0.445948490915965, 0.223381589678011)
        p2, w2 = _sym3(0.816847572980459, 0.091576213509771, 0.109951743655322)
        return p1 + p2, w1 + w2
    if degree == 5:
        p1, w1 = _sym3(0.059715871789770, 0.470142064105115, 0.132394152788506)
        p2, w2 = _sym3(0.797426985353087, 0.101286507323456, 0.125939180544827)
        return [(1 / 3, 1 / 3, 1 / 3)] + p1 + p2, [0.225] + w1 + w2
    raise ValueError(degree)


def _conical(degree: int):
    n = (degree + 2) // 2
    zj, wj = roots_jacobi(n, 1.0, 0.0)
    zl, wl = roots_legendre(n)
    s = 0.5 * (1.0 + zj)
    t = 0.5 * (1.0 + zl)
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(wj / 4.0, wl / 2.0)
    x, y = S, T * (1.0 - S)
    bary = np.stack([1.0 - x - y, x, y], axis=-1).reshape(-1, 3)
    return bary, 2.0 * W.ravel()


@lru_cache(maxsize=None)
def gauss_triangle(degree: int) -> TriangleRule:
    """Positive-weight rule exact for bivariate polynomials of total ``degree``.

    Degrees 1 to 5 use the symmetric Dunavant rules (degree 3 reuses the
    six-point degree-4 rule); degrees 6 to 10 use a Gauss-Jacobi conical product.
    """
    if degree not in SUPPORTED_DEGREES:
        raise ValueError(f"unsupported quadrature degree {degree}; choose from 1..10")
    if degree <= 5:
        pts, w = _dunavant(degree)
        bary = np.array(pts, dtype=float)
        w = np.array(w, dtype=float)
        # bump first coordinate to make barycentric rows sum to one exactly
        bary[:, 0] = 1.0 - bary[:, 1] - bary[:, 2]
    else:
        bary, w = _conical(degree)
    w = 0.5 * w / w.sum()
    bary.setflags(write=False)
    w.setflags(write=False)
    return TriangleRule(degree, bary, w)


_TS_STEP = 0.0625  # outer step for touching pairs; 0.125 leaves ~1e-7 on skewed shared edges


def tanh_sinh_nodes(step: float = 0.125, tmax: float = 3.2) -> tuple[np.ndarray, np.ndarray]:
    """Double-exponential nodes and weights on (0, 1)."""
    m = int(math.ceil(tmax / step))
    t = step * np.arange(-m, m + 1)
    u = 0.5 * math.pi * np.sinh(t)
    x = 0.5 * (1.0 + np.tanh(u))
    w = step * 0.25 * math.pi * np.cosh(t) / np.cosh(u) ** 2
    keep = (x > 1e-14) & (x < 1.0 - 1e-14)
    return x[keep], w[keep]


def tanh_sinh_square(step: float = 0.125) -> tuple[np.ndarray, np.ndarray]:
    """Tensor tanh-sinh rule on the reference triangle in collapsed coordinates.

    Returns barycentric points and weights summing to 1/2.
    """
    x, w = tanh_sinh_nodes(step)
    U, Vv = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w) * U
    # (u, v) -> (s, t) = (u (1 - v), u v): corners 0, 1, 2 at u=0, (1,0), (1,1)
    s = U * (1.0 - Vv)
    t = U * Vv
    bary = np.stack([1.0 - s - t, s, t], axis=-1).reshape(-1, 3)
    return bary, W.ravel()


def green(r, k: float):
    """Helmholtz Green's function exp(ikr) / (4 pi r)."""
    r = np.asarray(r, dtype=float)
    return np.exp(1j * k * r) / (4.0 * np.pi * r)


class PairCase(enum.Enum):
    SEPARATED = "separated"
    NEAR = "near"
    SHARED_VERTEX = "shared-vertex"
    SHARED_EDGE = "shared-edge"
    IDENTICAL = "identical"


@dataclass(frozen=True)
class QuadratureSettings:
    """Rule degrees and the near-field threshold (in units of triangle diameter).

    ``far_degree`` is used for separated pairs (both sides), ``outer_degree`` and
    ``inner_degree`` for near and touching pairs.  With ``near_rule =
    "tanh-sinh"`` matrix assembly replaces the outer Gauss rule of near and
    touching pairs by the collapsed tanh-sinh rule of spacing ``tanh_sinh_step``,
    which resolves the edge singularities of the inner potentials at a much
    higher cost.
    """

    outer_degree: int = 4
    inner_degree: int = 6
    far_degree: int = 2
    near_threshold: float = 2.0
    near_rule: str = "gauss"
    tanh_sinh_step: float = 0.25

    def __post_init__(self):
        for d in (self.outer_degree, self.inner_degree, self.far_degree):
            if d not in SUPPORTED_DEGREES:
                raise ValueError(f"unsupported quadrature degree {d}")
        if not self.near_threshold >= 0:
            raise ValueError("near_threshold must be nonnegative")
        if self.near_rule not in ("gauss", "tanh-sinh"):
            raise ValueError("near_rule must be 'gauss' or 'tanh-sinh'")
        if not 0 < self.tanh_sinh_step <= 1:
            raise ValueError("tanh_sinh_step must lie in (0, 1]")

    def near_outer_rule(self) -> tuple[np.ndarray, np.ndarray]:
        """Barycentric points and unit-sum weights of the assembly outer rule."""
        if self.near_rule == "gauss":
            r = gauss_triangle(self.outer_degree)
            return r.points, r.unit_weights
        bary, w = tanh_sinh_square(self.tanh_sinh_step)
        return bary, 2.0 * w


@dataclass(frozen=True)
class PairIntegrationPlan:
    case: PairCase
    outer: TriangleRule | None
    inner: TriangleRule
    strategy: str  # "plain", "singularity-subtracted" or "coordinate-transformed"


def _diameter(c):
    return max(np.linalg.norm(c[0] - c[1]), np.linalg.norm(c[1] - c[2]), np.linalg.norm(c[2] - c[0]))


def classify_pair(tri_x, tri_y, near_threshold: float = 2.0, tol: float = 1e-12) -> PairCase:
    """Classify by shared corners and centroid distance relative to the larger diameter."""
    cx = np.asarray(tri_x, dtype=float)
    cy = np.asarray(tri_y, dtype=float)
    h = max(_diameter(cx), _diameter(cy))
    dist = np.linalg.norm(cx[:, None, :] - cy[None, :, :], axis=2)
    shared = int(np.sum(dist.min(axis=1) <= tol * h))
    if shared >= 3:
        return PairCase.IDENTICAL
    if shared == 2:
        return PairCase.SHARED_EDGE
    if shared == 1:
        return PairCase.SHARED_VERTEX
    if np.linalg.norm(cx.mean(0) - cy.mean(0)) < near_threshold * h:
        return PairCase.NEAR
    return PairCase.SEPARATED


def plan_pair(tri_x, tri_y, settings: QuadratureSettings = QuadratureSettings()) -> PairIntegrationPlan:
    case = classify_pair(tri_x, tri_y, settings.near_threshold)
    if case is PairCase.SEPARATED:
        r = gauss_triangle(settings.far_degree)
        return PairIntegrationPlan(case, r, r, "plain")
    if case is PairCase.NEAR:
        return PairIntegrationPlan(case, gauss_triangle(settings.outer_degree),
                                   gauss_triangle(settings.inner_degree), "singularity-subtracted")
    return PairIntegrationPlan(case, None, gauss_triangle(settings.inner_degree), "coordinate-transformed")


def _geometry(c):
    c = np.ascontiguousarray(c, dtype=float)
    n = np.cross(c[1] - c[0], c[2] - c[0])
    a2 = np.linalg.norm(n)
    return c, n / a2, 0.5 * a2


def static_integrals(x, corners) -> tuple[float, np.ndarray, np.ndarray]:
    """Closed-form ``int 1/R``, ``int y/R`` and ``grad_x int 1/R`` over a triangle."""
    c, n, _ = _geometry(corners)
    return _kernels.static_potentials(np.asarray(x, dtype=float), c, n)


def _affine_field(c, F):
    """Coefficients (a, B) with f(x) = a + B x for the linear field with vertex values F."""
    c, n, area = _geometry(c)
    # gradients of barycentric coordinates (tangential)
    g1 = np.cross(n, c[0] - c[2]) / (2 * area)  # grad lambda_1 = n x (p0 - p2) / 2A
    g2 = np.cross(n, c[1] - c[0]) / (2 * area)
    g0 = -(g1 + g2)
    grads = np.stack([g0, g1, g2])
    F = np.asarray(F, dtype=complex if np.iscomplexobj(F) else float)
    B = F.T @ grads  # B[i, j] = sum_b F[b, i] grad_j lambda_b
    a = F[0] - B @ c[0]
    return a, B, grads


def _divergence(c, F):
    _, B, _ = _affine_field(c, F)
    return np.trace(B)


def _rt0_fit(c, F, tol=1e-9):
    """Return (a, alpha) with f(y) = a + alpha y if the field is of that form."""
    a, B, _ = _affine_field(c, F)
    _, n, _ = _geometry(c)
    P = np.eye(3) - np.outer(n, n)
    alpha = 0.5 * np.trace(P @ B @ P)
    resid = np.linalg.norm(B @ P - alpha * P)
    scale = max(np.abs(F).max(), 1e-300) / _diameter(c)
    if resid > tol * scale:
        raise ValueError("gradG_cross requires a trial trace of the form a + alpha*y")
    # B = alpha P, so on the plane a + B y = (a - alpha n (n . c0)) + alpha y
    return a - alpha * n * (n @ c[0]), alpha


def _remainder_kernel(R, k):
    """(e^{ikR} - 1)/(4 pi R) and its R-derivative, vectorised with a series for small kR."""
    kr = k * R
    small = kr < 1e-3
    Rs = np.where(small, 1.0, R)
    e = np.expm1(1j * k * Rs)
    val = np.where(small, (1j * k - 0.5 * k * kr - 1j * k * kr * kr / 6.0) / (4 * np.pi), e / (4 * np.pi * Rs))
    der = np.where(small, (-0.5 * k * k - 1j * k * k * kr / 3.0) / (4 * np.pi),
                   (1j * kr * (e + 1.0) - e) / (4 * np.pi * Rs * Rs))
    return val, der


def _split_remainder(points, cy, ny, k, n=16):
    """Remainder potentials with Duffy splitting of the inner triangle.

    The inner triangle is cut into three signed subtriangles with apex at the
    projection of ``x``.  Along each ray the radius is mapped through
    ``r = |d| sinh(s)`` (``d`` the height of ``x``) so ``R`` is smooth in ``s``.
    """
    x, w = roots_legendre(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    d = (points - cy[0]) @ ny
    p = points - d[:, None] * ny
    Vr = np.zeros(len(points), dtype=complex)
    Mr = np.zeros((len(points), 3), dtype=complex)
    Gr = np.zeros((len(points), 3), dtype=complex)
    if k == 0.0:
        return Vr, Mr, Gr
    ad = np.abs(d)[:, None]
    for a in range(3):
        e1 = cy[(a + 1) % 3][None, :] - p
        e2 = cy[(a + 2) % 3][None, :] - p
        area2 = np.cross(e1, e2) @ ny  # signed twice-area
        # angular sinh map about the foot of the perpendicular on the far edge
        E = e2 - e1
        lE = np.linalg.norm(E, axis=1)
        hh = np.maximum(np.abs(area2) / lE, 1e-300)
        v0 = -np.einsum("px,px->p", e1, E) / lE ** 2
        sa = np.arcsinh(-v0 * lE / hh)
        sb = np.arcsinh((1 - v0) * lE / hh)
        sig = sa[:, None] + (sb - sa)[:, None] * x[None, :]
        vv = v0[:, None] + (hh / lE)[:, None] * np.sinh(sig)
        wvv = w[None, :] * (hh / lE)[:, None] * np.cosh(sig) * (sb - sa)[:, None]
        ev = e1[:, None, :] + vv[..., None] * E[:, None, :]  # (P, v, 3)
        L = np.linalg.norm(ev, axis=2)
        mapped = ad > 1e-6 * L
        dl = np.where(mapped, ad / np.where(L > 0, L, 1.0), 1.0)
        smax = np.arcsinh(1.0 / dl)
        # u(P, v, s) with du weights; plain Gauss where the height is negligible
        sm = smax[:, :, None] * x[None, None, :]
        u = np.where(mapped[:, :, None], dl[:, :, None] * np.sinh(sm), x[None, None, :])
        du = np.where(mapped[:, :, None], dl[:, :, None] * np.cosh(sm) * smax[:, :, None], 1.0)
        wt = area2[:, None, None] * wvv[:, :, None] * w[None, None, :] * u * du
        y = p[:, None, None, :] + u[..., None] * ev[:, :, None, :]
        r = points[:, None, None, :] - y
        R = np.linalg.norm(r, axis=3)
        val, der = _remainder_kernel(R, k)
        wv = wt * val
        Vr += wv.sum((1, 2))
        Mr += np.einsum("pvs,pvsx->px", wv, y)
        wd = wt * np.where(R > 0, der / np.where(R > 0, R, 1.0), 0.0)
        Gr += np.einsum("pvs,pvsx->px", wd, r)
    return Vr, Mr, Gr


def _inner_potentials(points, cy, ny, ypts, yw, k, accurate):
    V = np.empty(len(points), dtype=complex)
    M = np.empty((len(points), 3), dtype=complex)
    G = np.empty((len(points), 3), dtype=complex)
    if accurate:
        for i, x in enumerate(points):
            I0, I1, g0 = _kernels.static_potentials(x, cy, ny)
            V[i], M[i], G[i] = I0 / (4 * np.pi), I1 / (4 * np.pi), g0 / (4 * np.pi)
        Vr, Mr, Gr = _split_remainder(points, cy, ny, k)
        return V + Vr, M + Mr, G + Gr
    for i, x in enumerate(points):
        V[i], M[i], G[i] = _kernels.point_potentials(x, ypts, yw, k)
    return V, M, G


def integrate_pair(kernel: str, tri_x, tri_y, fx, fy, k: float, *, moved: int = 2,
                   settings: QuadratureSettings = QuadratureSettings(),
                   plan: PairIntegrationPlan | None = None) -> complex:
    """Double integral over two triangles of a kernel contracted with linear traces.

    Parameters
    ----------
    kernel : {"G", "gradG_cross", "G_divdiv"}
        ``G``            int int G(x-y) fx(x) . fy(y)
        ``gradG_cross``  int int fx(x) . (grad_x G(x-y) x fy(y)); fy must be of the
                         Raviart-Thomas form a + alpha*y
        ``G_divdiv``     regularised hypersingular term: ``moved=2`` gives
                         int int G div fx div fy, ``moved=1`` gives
                         int fx(x) . grad_x int G div fy
    tri_x, tri_y : (3, 3) corner coordinates
    fx, fy : (3, 3) vector values of the traces at the corners
    k : nonnegative wavenumber
    """
    if kernel not in ("G", "gradG_cross", "G_divdiv"):
        raise ValueError(f"unknown kernel {kernel!r}")
    if k < 0:
        raise ValueError("k must be nonnegative")
    cx, nx, ax = _geometry(tri_x)
    cy, ny, ay = _geometry(tri_y)
    fx = np.asarray(fx, dtype=float)
    fy = np.asarray(fy, dtype=float)
    plan = plan or plan_pair(cx, cy, settings)

    inner = plan.inner
    ypts, yw = inner.map(cy)
    if plan.strategy == "coordinate-transformed":
        obary, ow = tanh_sinh_square(_TS_STEP)
    else:
        obary, ow = plan.outer.points, plan.outer.weights
    xpts = obary @ cx
    xw = ow * 2.0 * ax
    accurate = plan.strategy != "plain"
    V, M, G = _inner_potentials(xpts, cy, ny, ypts, yw, float(k), accurate)

    ay_, By, grads_y = _affine_field(cy, fy)
    fx_vals = obary @ fx
    if kernel == "G":
        # int G fy = a V + B M
        inner_val = V[:, None] * ay_[None, :] + M @ By.T
        val = np.sum(xw * np.einsum("ij,ij->i", fx_vals, inner_val))
    elif kernel == "G_divdiv":
        div_y = np.trace(By)
        if moved == 2:
            div_x = _divergence(cx, fx)
            val = div_x * div_y * np.sum(xw * V)
        elif moved == 1:
            val = div_y * np.sum(xw * np.einsum("ij,ij->i", fx_vals, G))
        else:
            raise ValueError("moved must be 1 or 2")
    else:
        a, alpha = _rt0_fit(cy, fy)
        ext = a[None, :] + alpha * xpts
        cr = np.cross(G, ext)
        val = np.sum(xw * np.einsum("ij,ij->i", fx_vals, cr))
    val = complex(val)
    if not np.isfinite(val.real) or not np.isfinite(val.imag):
        raise FloatingPointError(f"non-finite pair integral ({plan.case.value})")
    return val
