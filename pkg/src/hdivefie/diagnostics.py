"""Offline analysis: loop/star block scaling, Gram conditioning, spectra and symbols.

Loop/star transforms are used here only; solvers never touch them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .assembly import FormCache, MediumParams, Spaces, assemble_gram, build_spaces
from .basis import build_loop_star
from .mesh import Mesh, mesh_h
from .quadrature import QuadratureSettings
from .solver import Problem

__all__ = [
    "Fit",
    "ScalingReport",
    "SpectrumReport",
    "block_scaling",
    "gram_conditioning",
    "preconditioned_spectrum",
    "spectrum_report",
    "symbol_matrix",
    "symbol_eigenvalues",
    "loglog_fit",
    "write_scaling_csv",
    "write_spectrum_csv",
    "write_gram_csv",
    "BLOCKS",
]

BLOCKS = ("LL", "LS", "SL", "SS")
R2_MIN = 0.95


@dataclass(frozen=True)
class Fit:
    slope: float
    intercept: float
    r2: float

    @property
    def reliable(self) -> bool:
        return self.r2 > R2_MIN


def loglog_fit(x, y) -> Fit:
    """Least-squares line through (log x, log y)."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    if len(lx) < 2 or np.ptp(lx) == 0:
        raise ValueError("need at least two distinct abscissae for a fit")
    A = np.vstack([lx, np.ones_like(lx)]).T
    (m, b), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (m * lx + b)
    tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / tot if tot > 0 else 1.0
    return Fit(float(m), float(b), float(r2))


@dataclass
class ScalingReport:
    """Max-abs entries of projected blocks per (k, h) sample with fitted exponents.

    ``samples`` rows are (block, k, h, value); blocks include the matrix blocks
    LL, LS, SL, SS and the right-hand side parts bL, bS.
    """

    variant: str
    samples: list = field(default_factory=list)

    def values(self, block: str, *, h: float | None = None, k: float | None = None):
        rows = [r for r in self.samples if r[0] == block and (h is None or np.isclose(r[2], h))
                and (k is None or np.isclose(r[1], k))]
        return rows

    def hs(self):
        return sorted({r[2] for r in self.samples})

    def k_fit(self, block: str, h: float | None = None) -> Fit:
        """Exponent in k at mesh size ``h`` (default: the finest mesh)."""
        h = self.hs()[0] if h is None else h
        rows = self.values(block, h=h)
        return loglog_fit([r[1] for r in rows], [r[3] for r in rows])

    def h_fit(self, block: str, k: float, normalised: bool = False) -> Fit:
        """Exponent in h at fixed k; ``normalised`` divides the entries by h^2."""
        rows = self.values(block, k=k)
        f = loglog_fit([r[2] for r in rows], [r[3] for r in rows])
        return Fit(f.slope - 2.0, f.intercept, f.r2) if normalised else f

    def k_exponents(self, h: float | None = None) -> dict[str, Fit]:
        return {b: self.k_fit(b, h) for b in BLOCKS + ("bL", "bS")}


def _projected_blocks(A, b, test_ls, trial_ls):
    out = {}
    tl, ts = test_ls.loop.toarray(), test_ls.star.toarray()
    rl, rs = trial_ls.loop.toarray(), trial_ls.star.toarray()
    for name, (P, Q) in {"LL": (tl, rl), "LS": (tl, rs), "SL": (ts, rl), "SS": (ts, rs)}.items():
        out[name] = float(np.abs(P.T @ A @ Q).max())
    out["bL"] = float(np.abs(tl.T @ b).max())
    out["bS"] = float(np.abs(ts.T @ b).max())
    return out


def block_scaling(variant: str, meshes, ks, *, c_factor: float = 1.0,
                  quadrature: QuadratureSettings = QuadratureSettings()) -> ScalingReport:
    """Loop/star block orders of the L2 or H_div system over a mesh ladder and k list.

    L2 projects ``A_L2`` with RWG loops/stars on both sides; H_div projects
    ``A_Hdiv`` with BC loops/stars on the test side (``c = c_factor / k^2``).
    """
    if variant not in ("L2", "Hdiv"):
        raise ValueError("variant must be 'L2' or 'Hdiv'")
    ks = list(ks)
    if len(ks) < 2:
        raise ValueError("need at least two wavenumbers to fit exponents")
    report = ScalingReport(variant)
    for m in meshes:
        spaces = m if isinstance(m, Spaces) else build_spaces(m)
        h = mesh_h(spaces.mesh)
        rwg_ls = build_loop_star(spaces.rwg)
        test_ls = rwg_ls if variant == "L2" else build_loop_star(spaces.bc)
        for k in ks:
            pr = Problem(spaces, MediumParams.from_k(k, c_factor=c_factor), quadrature=quadrature)
            A = pr.matrix("A_L2" if variant == "L2" else "A_Hdiv")
            b = pr.matrix("b_L2" if variant == "L2" else "b_Hdiv")
            for name, val in _projected_blocks(A, b, test_ls, rwg_ls).items():
                report.samples.append((name, float(k), h, val))
    return report


GRAMS = ("T_L2", "T'_L2", "T''_L2", "T_Hdiv", "T'_Hdiv")


def gram_conditioning(ks, mesh_or_spaces, *, c_factor: float = 1.0, matrices=GRAMS) -> list[tuple[str, float, float]]:
    """2-norm condition numbers ``(matrix, k, cond)`` with ``c = c_factor / k^2``."""
    spaces = mesh_or_spaces if isinstance(mesh_or_spaces, Spaces) else build_spaces(mesh_or_spaces)
    rows = []
    for k in ks:
        p = MediumParams.from_k(k, c_factor=c_factor)
        for name in matrices:
            s = sla.svdvals(assemble_gram(name, spaces, p).data)
            rows.append((name, float(k), float(s[0] / s[-1])))
    return rows


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    centers: tuple
    radius: float
    fractions: dict

    @property
    def clustered_fraction(self) -> float:
        """Fraction of eigenvalues within ``radius`` of any centre."""
        ev = self.eigenvalues
        d = np.min(np.abs(ev[:, None] - np.asarray(self.centers, dtype=complex)[None, :]), axis=1)
        return float(np.mean(d <= self.radius))


def spectrum_report(eigenvalues, centers, radius: float = 0.15) -> SpectrumReport:
    ev = np.sort_complex(np.asarray(eigenvalues, dtype=complex))
    fr = {complex(c): float(np.mean(np.abs(ev - c) <= radius)) for c in centers}
    return SpectrumReport(ev, tuple(complex(c) for c in centers), radius, fr)


def preconditioned_spectrum(approach: int, matrices, params: MediumParams | None = None,
                            radius: float = 0.15) -> SpectrumReport:
    """Eigenvalues of the right-preconditioned system matrix.

    Approach 1: ``A_Hdiv T_L2^-1 S T''_L2^-1``, predicted accumulation at
    ``c k^2 / 4`` and ``-1/4``.  Approach 3: ``A_L2 T_L2^-1 A'_L2 T'_L2^-1``,
    predicted accumulation at ``-1/4`` (``(i omega mu)(i omega eps) Q^2 = -k^2 Q^2``).
    ``matrices`` is a :class:`Problem` or a mapping of names to arrays.
    """
    get = matrices.matrix if isinstance(matrices, Problem) else matrices.__getitem__
    if params is None:
        params = matrices.params if isinstance(matrices, Problem) else None
    if approach == 1:
        if params is None:
            raise ValueError("approach 1 needs MediumParams for the predicted centre")
        M = get("A_Hdiv") @ sla.solve(get("T_L2"), get("S_L2") @ np.linalg.inv(get("T''_L2")))
        centers = (params.c * params.k ** 2 / 4.0, -0.25)
    elif approach == 3:
        M = get("A_L2") @ sla.solve(get("T_L2"), get("A'_L2") @ np.linalg.inv(get("T'_L2")))
        centers = (-0.25,)
    else:
        raise ValueError("spectra are defined for approaches 1 and 3")
    if M.shape[0] > 4000:
        raise ValueError("dimension too large for a dense eigendecomposition")
    return spectrum_report(np.linalg.eigvals(M), centers, radius)


_EPS2 = np.array([[0.0, 1.0], [-1.0, 0.0]])


def symbol_matrix(c: float, k: float, xi, *, form: str = "asymptotic", omega: float | None = None,
                  epsilon: float = 1.0, mu: float = 1.0) -> np.ndarray:
    """2x2 principal symbol of the preconditioned H_div operator.

    ``form="asymptotic"`` is the large-|xi| limit
    ``-k^2/(4|xi|^2) ((eps xi)(eps xi)^T / k^2 - c xi xi^T)``; ``form="product"``
    multiplies the symbols of the H_div operator and of ``i omega eps S`` at finite
    ``xi`` with ``rho = sqrt(|xi|^2 - k^2)``.
    """
    xi = np.asarray(xi, dtype=float).reshape(2)
    nx2 = float(xi @ xi)
    if nx2 == 0:
        raise ValueError("xi must be nonzero")
    rho2 = nx2 - k * k
    if rho2 <= 0:
        raise ValueError("|xi| must exceed k so that rho is real")
    exi = _EPS2 @ xi
    if form == "asymptotic":
        return -(k * k) / (4.0 * nx2) * (np.outer(exi, exi) / (k * k) - c * np.outer(xi, xi)) + 0j
    if form != "product":
        raise ValueError("form must be 'asymptotic' or 'product'")
    omega = k / np.sqrt(epsilon * mu) if omega is None else omega
    rho = np.sqrt(rho2)
    Q = 0.5j * omega * mu * (-_EPS2 / rho + np.outer(exi, xi) / (k * k * rho) + c * np.outer(xi, exi) / rho)
    S = -0.5j * omega * epsilon * _EPS2 / rho
    return Q @ S


def symbol_eigenvalues(c: float, k: float, xi, *, form: str = "asymptotic") -> tuple[complex, complex]:
    """Eigenvalues of :func:`symbol_matrix` on ``xi`` and on ``eps xi`` (in that order).

    Both directions are exact eigenvectors, so the Rayleigh quotients are the
    eigenvalues; the asymptotic form gives ``(c k^2 / 4, -1/4)``.
    """
    M = symbol_matrix(c, k, xi, form=form)
    xi = np.asarray(xi, float)
    exi = _EPS2 @ xi
    lam1 = complex(xi @ M @ xi / (xi @ xi))
    lam2 = complex(exi @ M @ exi / (exi @ exi))
    return lam1, lam2


def _write(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def write_scaling_csv(report: ScalingReport, path) -> Path:
    return _write(path, ["block", "k", "h", "max_entry"],
                  [(b, f"{k:.12g}", f"{h:.12g}", f"{v:.12e}") for b, k, h, v in report.samples])


def write_spectrum_csv(report: SpectrumReport, path) -> Path:
    return _write(path, ["re", "im"], [(f"{z.real:.12e}", f"{z.imag:.12e}") for z in report.eigenvalues])


def write_gram_csv(rows, path) -> Path:
    return _write(path, ["matrix", "k", "cond"], [(m, f"{k:.12g}", f"{c:.12e}") for m, k, c in rows])
