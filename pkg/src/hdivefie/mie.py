"""Mie series for a perfectly conducting sphere under plane-wave incidence.

Time convention ``exp(-i omega t)``, incident field ``E0 exp(i k z')`` in the
incidence frame (z' along propagation, x' along polarisation), amplitude
``|E0| = 1``.  With ``psi_n = rho j_n``, ``xi_n = rho h_n^(1)`` and the Wronskian
``psi_n xi_n' - psi_n' xi_n = i`` the tangential total magnetic field on the
surface ``rho = k a`` is

    H_theta = (k / omega mu) sin(phi) sum E_n [i pi_n / (rho xi_n') - tau_n / (rho xi_n)]
    H_phi   = (k / omega mu) cos(phi) sum E_n [i tau_n / (rho xi_n') - pi_n / (rho xi_n)]

with ``E_n = i^n (2n+1) / (n (n+1))`` and the angular functions ``pi_n``, ``tau_n``
of Bohren and Huffman.  The surface current is ``j = n x H``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import spherical_jn, spherical_yn

from .quadrature import gauss_triangle

__all__ = [
    "MieSeries",
    "MieError",
    "mie_surface_current",
    "mie_surface_fields",
    "relative_error",
    "current_from_coefficients",
    "default_order",
]


class MieError(ValueError):
    pass


def default_order(ka: float) -> int:
    return max(10, math.ceil(ka) + 15)


@dataclass(frozen=True, eq=False)
class MieSeries:
    """Precomputed Riccati-Bessel data for one sphere and wavenumber.

    ``propagation`` and ``polarization`` are orthonormal real directions of the
    incident wave (default +z and +x).
    """

    radius: float
    k: float
    n_max: int | None = None
    omega_mu: float | None = None
    propagation: tuple = (0.0, 0.0, 1.0)
    polarization: tuple = (1.0, 0.0, 0.0)
    tail_tol: float = 1e-10
    coef: dict = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.radius > 0 and self.k > 0):
            raise MieError("radius and k must be positive")
        zp = np.asarray(self.propagation, float)
        xp = np.asarray(self.polarization, float)
        if abs(np.linalg.norm(zp) - 1) > 1e-12 or abs(np.linalg.norm(xp) - 1) > 1e-12 or abs(zp @ xp) > 1e-12:
            raise MieError("propagation and polarization must be orthonormal")
        if self.omega_mu is None:
            object.__setattr__(self, "omega_mu", self.k)  # epsilon = mu = 1
        nmax = self.n_max or default_order(self.k * self.radius)
        object.__setattr__(self, "n_max", int(nmax))
        rho = self.k * self.radius
        n = np.arange(1, nmax + 1)
        j, jd = spherical_jn(n, rho), spherical_jn(n, rho, derivative=True)
        y, yd = spherical_yn(n, rho), spherical_yn(n, rho, derivative=True)
        h = j + 1j * y
        hd = jd + 1j * yd
        xi = rho * h
        xid = h + rho * hd
        psi = rho * j
        psid = j + rho * jd
        En = (1j ** n) * (2 * n + 1) / (n * (n + 1))
        frame = np.stack([xp, np.cross(zp, xp), zp])
        object.__setattr__(self, "coef", dict(
            n=n, rho=rho, En=En, xi=xi, xid=xid, h=h,
            a=psid / xid, b=psi / xi, frame=frame))

    @property
    def ka(self) -> float:
        return self.k * self.radius

    def _angles(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.linalg.norm(pts, axis=1)
        if np.any(np.abs(r - self.radius) > 1e-9 * max(1.0, self.radius)):
            raise MieError("evaluation point is not on the sphere")
        loc = pts @ self.coef["frame"].T
        ct = np.clip(loc[:, 2] / r, -1.0, 1.0)
        st = np.sqrt(np.maximum(0.0, 1.0 - ct * ct))
        phi = np.arctan2(loc[:, 1], loc[:, 0])
        N = self.n_max
        pi = np.zeros((len(ct), N + 1))
        tau = np.zeros((len(ct), N + 1))
        pi[:, 1] = 1.0
        for m in range(2, N + 1):
            pi[:, m] = (2 * m - 1) / (m - 1) * ct * pi[:, m - 1] - m / (m - 1) * pi[:, m - 2]
        for m in range(1, N + 1):
            tau[:, m] = m * ct * pi[:, m] - (m + 1) * pi[:, m - 1]
        return loc, ct, st, phi, pi[:, 1:], tau[:, 1:]

    def _to_global(self, ct, st, phi, v_theta, v_phi, v_r=None):
        cp, sp_ = np.cos(phi), np.sin(phi)
        th = np.stack([ct * cp, ct * sp_, -st], axis=1)
        ph = np.stack([-sp_, cp, np.zeros_like(cp)], axis=1)
        loc = v_theta[:, None] * th + v_phi[:, None] * ph
        if v_r is not None:
            loc = loc + v_r[:, None] * np.stack([st * cp, st * sp_, ct], axis=1)
        return loc @ self.coef["frame"]

    def _terms_H(self, pi, tau):
        c = self.coef
        rho = c["rho"]
        th = c["En"] * (1j * pi / (rho * c["xid"]) - tau / (rho * c["xi"]))
        ph = c["En"] * (1j * tau / (rho * c["xid"]) - pi / (rho * c["xi"]))
        return th, ph

    def tail_ratio(self, points) -> float:
        """Largest ratio of the last retained term to the full sum over ``points``."""
        _, ct, st, phi, pi, tau = self._angles(points)
        th, ph = self._terms_H(pi, tau)
        total = np.hypot(np.abs(th.sum(1)), np.abs(ph.sum(1)))
        last = np.hypot(np.abs(th[:, -1]), np.abs(ph[:, -1]))
        return float(np.max(last / np.maximum(total, 1e-300)))


def _check_converged(series: MieSeries, points):
    if series.tail_ratio(points) > series.tail_tol:
        raise MieError(f"Mie series with n_max={series.n_max} not converged at ka={series.ka:g}")


def mie_surface_current(series: MieSeries, points, *, check: bool = True) -> np.ndarray:
    """Surface current ``n x H_total`` at points on the sphere, shape (P, 3) (or (3,))."""
    single = np.asarray(points).ndim == 1
    _, ct, st, phi, pi, tau = series._angles(points)
    if check:
        _check_converged(series, points)
    th, ph = series._terms_H(pi, tau)
    scale = series.k / series.omega_mu
    H_theta = scale * np.sin(phi) * th.sum(1)
    H_phi = scale * np.cos(phi) * ph.sum(1)
    # r x (H_theta theta + H_phi phi) = H_theta phi - H_phi theta
    j = series._to_global(ct, st, phi, -H_phi, H_theta)
    return j[0] if single else j


def mie_surface_fields(series: MieSeries, points) -> tuple[np.ndarray, np.ndarray]:
    """Scattered electric field from the series and the incident field from the
    plane wave, both at points on the sphere.  Their tangential sum vanishes on
    a perfect conductor."""
    loc, ct, st, phi, pi, tau = series._angles(points)
    c = series.coef
    rho, n = c["rho"], c["n"]
    En, a, b, xid, h = c["En"], c["a"], c["b"], c["xid"], c["h"]
    e_th = np.cos(phi) * (En * (1j * a * tau * xid / rho - b * pi * h)).sum(1)
    e_ph = np.sin(phi) * (En * (-1j * a * pi * xid / rho + b * tau * h)).sum(1)
    e_r = np.cos(phi) * st * (En * 1j * a * n * (n + 1) * pi * h).sum(1)
    Es = series._to_global(ct, st, phi, e_th, e_ph, e_r)
    Ei = np.exp(1j * series.k * loc[:, 2])[:, None] * c["frame"][0][None, :]
    return Es, Ei


def current_from_coefficients(coeffs, space, degree: int = 6):
    """Quadrature points, weights and the expanded current ``sum_i x_i f_i``."""
    mesh = space.mesh
    rule = gauss_triangle(degree)
    corners = mesh.corners
    pts = np.einsum("qa,tax->tqx", rule.points, corners)
    w = rule.unit_weights[None, :] * mesh.areas[:, None]
    x = np.asarray(coeffs, dtype=complex)
    # half coefficients per triangle
    hc = np.asarray(space.coef.T @ x).reshape(mesh.n_triangles, 3)
    diff = (pts[:, :, None, :] - corners[:, None, :, :]) / (2.0 * mesh.areas)[:, None, None, None]
    j = np.einsum("ta,tqax->tqx", hc, diff)
    return pts.reshape(-1, 3), w.ravel(), j.reshape(-1, 3)


def relative_error(coeffs, basis, mesh, series: MieSeries, degree: int = 6) -> float:
    """L2 relative error of the expanded current against the Mie current.

    Quadrature points on the flat triangles are projected radially onto the
    sphere to evaluate the analytic current.
    """
    if basis.mesh is not mesh:
        raise ValueError("basis does not live on the given mesh")
    if degree < 4:
        raise ValueError("use a rule of degree >= 4")
    pts, w, j = current_from_coefficients(coeffs, basis, degree=degree)
    proj = series.radius * pts / np.linalg.norm(pts, axis=1)[:, None]
    ja = mie_surface_current(series, proj)
    den = np.sum(w * np.sum(np.abs(ja) ** 2, axis=1))
    if den <= 0:
        raise MieError("analytic current vanishes")
    num = np.sum(w * np.sum(np.abs(j - ja) ** 2, axis=1))
    return float(math.sqrt(num / den))
