"""Compiled inner loops shared by the quadrature and assembly modules.

Half-function convention: on a triangle with corners p_0, p_1, p_2 and area A the
half ``h_a(x) = (x - p_a) / (2A)`` has unit outward flux through the edge opposite
``p_a`` and divergence ``1/A``.
"""

import math

import numpy as np
from numba import njit

FOUR_PI = 4.0 * math.pi
INV_4PI = 1.0 / FOUR_PI


@njit(cache=True)
def _edge_log(lp, lm, Rp, Rm, R0):
    """ln((Rp + lp) / (Rm + lm)) evaluated without cancellation."""
    if lm >= 0.0:
        return math.log((Rp + lp) / (Rm + lm))
    if lp <= 0.0:
        return math.log((Rm - lm) / (Rp - lp))
    # lm < 0 < lp: the projected point lies between the edge end points
    return math.log(Rp + lp) + math.log(Rm - lm) - 2.0 * math.log(R0)


@njit(cache=True)
def static_potentials(x, c, n):
    """Closed-form static integrals over a flat triangle.

    Returns ``(I0, I1, g)`` with ``I0 = int 1/R``, ``I1 = int y/R`` (3-vector) and
    ``g = grad_x int 1/R``; ``R = |x - y|``, y over the triangle with corners ``c``
    and unit normal ``n``.  On the triangle plane the normal part of ``g`` is the
    principal value (zero).
    """
    d = n[0] * (x[0] - c[0, 0]) + n[1] * (x[1] - c[0, 1]) + n[2] * (x[2] - c[0, 2])
    size = abs(c[1, 0] - c[0, 0]) + abs(c[1, 1] - c[0, 1]) + abs(c[1, 2] - c[0, 2])
    if abs(d) <= 1e-12 * size:
        d = 0.0
    ad = abs(d)
    rho0 = x[0] - d * n[0]
    rho1 = x[1] - d * n[1]
    rho2 = x[2] - d * n[2]
    I0 = 0.0
    J0 = 0.0
    J1 = 0.0
    J2 = 0.0
    g0 = 0.0
    g1 = 0.0
    g2 = 0.0
    sb = 0.0
    for i in range(3):
        a = (i + 1) % 3
        b = (i + 2) % 3
        e0 = c[b, 0] - c[a, 0]
        e1 = c[b, 1] - c[a, 1]
        e2 = c[b, 2] - c[a, 2]
        le = math.sqrt(e0 * e0 + e1 * e1 + e2 * e2)
        s0 = e0 / le
        s1 = e1 / le
        s2 = e2 / le
        u0 = s1 * n[2] - s2 * n[1]
        u1 = s2 * n[0] - s0 * n[2]
        u2 = s0 * n[1] - s1 * n[0]
        pm0 = c[a, 0] - rho0
        pm1 = c[a, 1] - rho1
        pm2 = c[a, 2] - rho2
        pp0 = c[b, 0] - rho0
        pp1 = c[b, 1] - rho1
        pp2 = c[b, 2] - rho2
        lm = pm0 * s0 + pm1 * s1 + pm2 * s2
        lp = pp0 * s0 + pp1 * s1 + pp2 * s2
        t0 = pp0 * u0 + pp1 * u1 + pp2 * u2
        R02 = t0 * t0 + d * d
        Rp = math.sqrt(R02 + lp * lp)
        Rm = math.sqrt(R02 + lm * lm)
        R0 = math.sqrt(R02)
        if R0 < 1e-14 * le and lm < 0.0 < lp:
            # on the edge itself: integrable log singularity, keep it finite
            R0 = 1e-14 * le
            f = _edge_log(lp, lm, math.sqrt(R0 * R0 + lp * lp), math.sqrt(R0 * R0 + lm * lm), R0)
        else:
            f = _edge_log(lp, lm, Rp, Rm, R0)
        if abs(t0) <= 1e-15 * le:
            beta = 0.0
            tf = 0.0
        else:
            beta = math.atan(t0 * lp / (R02 + ad * Rp)) - math.atan(t0 * lm / (R02 + ad * Rm))
            tf = t0 * f
        I0 += tf - ad * beta
        sb += beta
        q = 0.5 * (lp * Rp - lm * Rm)
        if R02 > 0.0:
            q += 0.5 * R02 * f
        J0 += u0 * q
        J1 += u1 * q
        J2 += u2 * q
        g0 -= u0 * f
        g1 -= u1 * f
        g2 -= u2 * f
    sd = 0.0
    if d > 0.0:
        sd = 1.0
    elif d < 0.0:
        sd = -1.0
    g0 -= n[0] * sd * sb
    g1 -= n[1] * sd * sb
    g2 -= n[2] * sd * sb
    I1 = np.empty(3)
    I1[0] = J0 + rho0 * I0
    I1[1] = J1 + rho1 * I0
    I1[2] = J2 + rho2 * I0
    g = np.empty(3)
    g[0] = g0
    g[1] = g1
    g[2] = g2
    return I0, I1, g


@njit(cache=True)
def remainder_kernel(R, k):
    """(e^{ikR} - 1)/(4 pi R) and its R-derivative, stable for small kR."""
    kr = k * R
    if kr < 1e-3:
        val = complex(-0.5 * k * kr + k * kr * kr * kr / 24.0, k - k * kr * kr / 6.0) * INV_4PI
        der = complex(-0.5 * k * k + k * k * kr * kr / 8.0, -k * k * kr / 3.0) * INV_4PI
        return val, der
    sh = math.sin(0.5 * kr)
    e = complex(-2.0 * sh * sh, math.sin(kr))
    val = e / (FOUR_PI * R)
    ek = complex(math.cos(kr), math.sin(kr))
    der = (1j * kr * ek - e) / (FOUR_PI * R * R)
    return val, der


@njit(cache=True)
def smooth_potentials(x, ypts, yw, k):
    """Gauss sums of the smooth remainder: V_r, M_r (moment) and grad_x V_r."""
    V = 0j
    M = np.zeros(3, dtype=np.complex128)
    g = np.zeros(3, dtype=np.complex128)
    if k == 0.0:
        return V, M, g
    for q in range(ypts.shape[0]):
        r0 = x[0] - ypts[q, 0]
        r1 = x[1] - ypts[q, 1]
        r2 = x[2] - ypts[q, 2]
        R = math.sqrt(r0 * r0 + r1 * r1 + r2 * r2)
        val, der = remainder_kernel(R, k)
        wv = yw[q] * val
        V += wv
        M[0] += wv * ypts[q, 0]
        M[1] += wv * ypts[q, 1]
        M[2] += wv * ypts[q, 2]
        if R > 0.0:
            wd = yw[q] * der / R
            g[0] += wd * r0
            g[1] += wd * r1
            g[2] += wd * r2
    return V, M, g


@njit(cache=True)
def accurate_potentials(x, c, n, ypts, yw, k):
    """V = int G, M = int G y and grad_x V over one triangle, singularity subtracted."""
    I0, I1, g0 = static_potentials(x, c, n)
    V, M, g = smooth_potentials(x, ypts, yw, k)
    V += I0 * INV_4PI
    for j in range(3):
        M[j] += I1[j] * INV_4PI
        g[j] += g0[j] * INV_4PI
    return V, M, g


@njit(cache=True)
def point_potentials(x, ypts, yw, k):
    """V, M and grad_x V over one triangle by the plain point rule."""
    V = 0j
    M = np.zeros(3, dtype=np.complex128)
    g = np.zeros(3, dtype=np.complex128)
    for q in range(ypts.shape[0]):
        r0 = x[0] - ypts[q, 0]
        r1 = x[1] - ypts[q, 1]
        r2 = x[2] - ypts[q, 2]
        R = math.sqrt(r0 * r0 + r1 * r1 + r2 * r2)
        kr = k * R
        ek = complex(math.cos(kr), math.sin(kr))
        G = ek / (FOUR_PI * R)
        dG = (complex(0.0, kr) - 1.0) * G / (R * R)
        wG = yw[q] * G
        V += wG
        M[0] += wG * ypts[q, 0]
        M[1] += wG * ypts[q, 1]
        M[2] += wG * ypts[q, 2]
        wd = yw[q] * dG
        g[0] += wd * r0
        g[1] += wd * r1
        g[2] += wd * r2
    return V, M, g


@njit(cache=True)
def _cross(a, b):
    out = np.empty(3, dtype=np.complex128)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=True)
def near_blocks(xc, xn, xa, yc, yn, ya, pairs, obary, ow, ibary, iw, k, accurate, out):
    """Local 3x3 half-function blocks of six bilinear forms for triangle pairs.

    ``out[p, f, a, b]`` for pair ``p`` with form index ``f``:

    0 vv  int int G h_a . h_b
    1 rv  int int G (n x h_a) . h_b
    2 dd  int int G div h_a div h_b
    3 gd  int h_a . grad V  div h_b            (V = int_Y G)
    4 rg  int (n x h_a) . grad V  div h_b
    5 mf  int div h_a  n . int grad_x G x h_b

    The inner integral is singularity subtracted when ``accurate`` is true,
    otherwise the inner rule is applied to G directly.
    """
    nq = obary.shape[0]
    ni = ibary.shape[0]
    x = np.empty(3)
    ypts = np.empty((ni, 3))
    yw = np.empty(ni)
    for p in range(pairs.shape[0]):
        X = pairs[p, 0]
        Y = pairs[p, 1]
        AX = xa[X]
        AY = ya[Y]
        for q in range(ni):
            for j in range(3):
                ypts[q, j] = ibary[q, 0] * yc[Y, 0, j] + ibary[q, 1] * yc[Y, 1, j] + ibary[q, 2] * yc[Y, 2, j]
            yw[q] = iw[q] * AY
        nX = xn[X]
        for o in range(nq):
            for j in range(3):
                x[j] = obary[o, 0] * xc[X, 0, j] + obary[o, 1] * xc[X, 1, j] + obary[o, 2] * xc[X, 2, j]
            w = ow[o] * AX
            if accurate:
                V, M, g = accurate_potentials(x, yc[Y], yn[Y], ypts, yw, k)
            else:
                V, M, g = point_potentials(x, ypts, yw, k)
            dd = w * V / (AX * AY)
            for a in range(3):
                ha = np.empty(3)
                for j in range(3):
                    ha[j] = (x[j] - xc[X, a, j]) / (2.0 * AX)
                ra = np.empty(3)
                ra[0] = nX[1] * ha[2] - nX[2] * ha[1]
                ra[1] = nX[2] * ha[0] - nX[0] * ha[2]
                ra[2] = nX[0] * ha[1] - nX[1] * ha[0]
                hg = ha[0] * g[0] + ha[1] * g[1] + ha[2] * g[2]
                rgv = ra[0] * g[0] + ra[1] * g[1] + ra[2] * g[2]
                for b in range(3):
                    s = 1.0 / (2.0 * AY)
                    W0 = (M[0] - yc[Y, b, 0] * V) * s
                    W1 = (M[1] - yc[Y, b, 1] * V) * s
                    W2 = (M[2] - yc[Y, b, 2] * V) * s
                    out[p, 0, a, b] += w * (ha[0] * W0 + ha[1] * W1 + ha[2] * W2)
                    out[p, 1, a, b] += w * (ra[0] * W0 + ra[1] * W1 + ra[2] * W2)
                    out[p, 2, a, b] += dd
                    out[p, 3, a, b] += w * hg / AY
                    out[p, 4, a, b] += w * rgv / AY
            for b in range(3):
                d0 = x[0] - yc[Y, b, 0]
                d1 = x[1] - yc[Y, b, 1]
                d2 = x[2] - yc[Y, b, 2]
                c0 = g[1] * d2 - g[2] * d1
                c1 = g[2] * d0 - g[0] * d2
                c2 = g[0] * d1 - g[1] * d0
                val = w * (nX[0] * c0 + nX[1] * c1 + nX[2] * c2) / (AX * 2.0 * AY)
                for a in range(3):
                    out[p, 5, a, b] += val


@njit(cache=True)
def far_sweep(xp, xnrm, xtri, p0, p1, near_ptr, near_idx,
              ypts, yw, fptr, fidx, falpha, fbeta, k,
              want_v, want_d, want_g, want_m,
              acc_v, acc_d, acc_g, acc_m, mark, upper):
    """Point-rule interactions of test points ``p0:p1`` with all trial triangles.

    Trial functions are given per trial triangle Y in CSR form: on Y the
    function ``fidx[e]`` equals ``falpha[e] * y - fbeta[e]`` so that
    ``int_Y G f = alpha M - beta V`` and ``div f = 2 alpha``.  Near pairs listed
    in ``near_ptr/near_idx`` (per test triangle) are skipped, and with ``upper``
    only trial triangles with a larger index than the test triangle are visited.

    Accumulators (rows are local test points ``p - p0``):
    ``acc_v[c]``  int G f_c,  ``acc_d``  int G div f,
    ``acc_g[c]``  grad_c int G div f,  ``acc_m``  n . int grad_x G x f.
    """
    nY = ypts.shape[0]
    nq = ypts.shape[1]
    for p in range(p0, p1):
        r = p - p0
        X = xtri[p]
        for e in range(near_ptr[X], near_ptr[X + 1]):
            mark[near_idx[e]] = True
        x = xp[p]
        nx = xnrm[p]
        xn0 = x[1] * nx[2] - x[2] * nx[1]
        xn1 = x[2] * nx[0] - x[0] * nx[2]
        xn2 = x[0] * nx[1] - x[1] * nx[0]
        y_start = X + 1 if upper else 0
        for Y in range(y_start, nY):
            if mark[Y]:
                continue
            V = 0j
            M0 = 0j
            M1 = 0j
            M2 = 0j
            g0 = 0j
            g1 = 0j
            g2 = 0j
            for q in range(nq):
                y0 = ypts[Y, q, 0]
                y1 = ypts[Y, q, 1]
                y2 = ypts[Y, q, 2]
                r0 = x[0] - y0
                r1 = x[1] - y1
                r2 = x[2] - y2
                R = math.sqrt(r0 * r0 + r1 * r1 + r2 * r2)
                kr = k * R
                wG = yw[Y, q] * complex(math.cos(kr), math.sin(kr)) / (FOUR_PI * R)
                V += wG
                M0 += wG * y0
                M1 += wG * y1
                M2 += wG * y2
                wd = wG * complex(-1.0, kr) / (R * R)
                g0 += wd * r0
                g1 += wd * r1
                g2 += wd * r2
            if want_m:
                # n.(g x x) = g.(x x n);  n.(g x beta) = beta.(n x g)
                rr = g0 * xn0 + g1 * xn1 + g2 * xn2
                e0 = nx[1] * g2 - nx[2] * g1
                e1 = nx[2] * g0 - nx[0] * g2
                e2 = nx[0] * g1 - nx[1] * g0
            for e in range(fptr[Y], fptr[Y + 1]):
                j = fidx[e]
                al = falpha[e]
                if want_v:
                    acc_v[0, r, j] += al * M0 - fbeta[e, 0] * V
                    acc_v[1, r, j] += al * M1 - fbeta[e, 1] * V
                    acc_v[2, r, j] += al * M2 - fbeta[e, 2] * V
                if want_d:
                    acc_d[r, j] += 2.0 * al * V
                if want_g:
                    acc_g[0, r, j] += 2.0 * al * g0
                    acc_g[1, r, j] += 2.0 * al * g1
                    acc_g[2, r, j] += 2.0 * al * g2
                if want_m:
                    acc_m[r, j] += al * rr - (fbeta[e, 0] * e0 + fbeta[e, 1] * e1 + fbeta[e, 2] * e2)
        for e in range(near_ptr[X], near_ptr[X + 1]):
            mark[near_idx[e]] = False
