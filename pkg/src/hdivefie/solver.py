"""GMRES, Gram-based right preconditioners and the five solution approaches."""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .assembly import (FormCache, MediumParams, PlaneWave, Spaces, assemble_dual_efio, assemble_efie_hdiv,
                       assemble_efie_l2, assemble_gram, assemble_rhs_hdiv, assemble_rhs_l2, assemble_single_layer)
from .quadrature import QuadratureSettings

__all__ = [
    "LinearOperator",
    "SolveReport",
    "SolverSettings",
    "InnerSolveError",
    "BreakdownError",
    "gmres",
    "lu_solve",
    "Problem",
    "build_preconditioner",
    "solve_approach",
    "APPROACHES",
]

APPROACHES = (1, 2, 3, 4, 5)


class InnerSolveError(RuntimeError):
    """An inner inverse did not converge; ``label`` names the matrix."""

    def __init__(self, label: str, report: "SolveReport"):
        super().__init__(f"inner solve on {label} did not converge after {report.iterations} iterations "
                         f"(residual {report.residual:.3e})")
        self.label = label
        self.report = report


class BreakdownError(RuntimeError):
    pass


class LinearOperator:
    """Square linear map given by a matvec closure."""

    def __init__(self, n: int, apply: Callable[[np.ndarray], np.ndarray], label: str = "op"):
        self.n = int(n)
        self._apply = apply
        self.label = label

    @classmethod
    def from_matrix(cls, M, label: str = "matrix") -> "LinearOperator":
        M = np.asarray(M)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("operator matrix must be square")
        return cls(M.shape[0], lambda v: M @ v, label)

    @classmethod
    def identity(cls, n: int) -> "LinearOperator":
        return cls(n, lambda v: np.array(v, dtype=complex), "identity")

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=complex)
        if v.shape != (self.n,):
            raise ValueError(f"expected a vector of length {self.n}")
        return self._apply(v)

    __call__ = apply

    def __matmul__(self, other):
        if isinstance(other, LinearOperator):
            return LinearOperator(self.n, lambda v: self.apply(other.apply(v)), f"{self.label}*{other.label}")
        return self.apply(other)

    def dense(self) -> np.ndarray:
        """Materialise column by column (small dimensions only)."""
        return np.column_stack([self.apply(e) for e in np.eye(self.n, dtype=complex)])


@dataclass
class SolveReport:
    x: np.ndarray
    iterations: int
    residual_history: list[float]
    converged: bool
    inner_iterations: dict[str, int] = field(default_factory=dict)
    breakdown: bool = False
    seconds: float = 0.0

    @property
    def residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else 0.0

    @property
    def inner_total(self) -> int:
        return int(sum(self.inner_iterations.values()))


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-5
    max_iter: int = 3000
    inner_tol: float = 1e-8
    inner_max_iter: int = 3000
    restart: int = 0
    inner_method: str = "gmres"

    def __post_init__(self):
        if not (0 < self.tol < 1 and 0 < self.inner_tol < 1):
            raise ValueError("tolerances must lie in (0, 1)")
        if self.max_iter < 1 or self.inner_max_iter < 1 or self.restart < 0:
            raise ValueError("iteration limits must be positive")
        if self.inner_method not in ("gmres", "lu"):
            raise ValueError("inner_method must be 'gmres' or 'lu'")


def _as_operator(op) -> LinearOperator:
    return op if isinstance(op, LinearOperator) else LinearOperator.from_matrix(op)


def gmres(op, b, tol: float = 1e-5, max_iter: int = 3000, *, precond=None, restart: int = 0,
          x0=None) -> SolveReport:
    """Right-preconditioned GMRES with modified Gram-Schmidt and Givens rotations.

    Solves ``A P y = b`` and returns ``x = P y``.  The residual history holds the
    relative residual ``|b - A x| / |b|`` after every iteration (index 0 is the
    initial residual).  ``restart = 0`` means no restart.
    """
    A = _as_operator(op)
    P = None if precond is None else _as_operator(precond)
    b = np.asarray(b, dtype=complex)
    n = A.n
    if b.shape != (n,):
        raise ValueError("right-hand side has the wrong length")
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return SolveReport(np.zeros(n, dtype=complex), 0, [0.0], True)
    x = np.zeros(n, dtype=complex) if x0 is None else np.array(x0, dtype=complex)
    m = max_iter if restart <= 0 else min(restart, max_iter)
    history = []
    total = 0
    breakdown = False
    while True:
        r = b - A.apply(x) if total or x0 is not None else b.copy()
        beta = np.linalg.norm(r)
        if not history:
            history.append(beta / bnorm)
        if beta / bnorm < tol:
            return SolveReport(x, total, history, True)
        Q = np.zeros((n, m + 1), dtype=complex)
        H = np.zeros((m + 1, m), dtype=complex)
        cs = np.zeros(m, dtype=complex)
        sn = np.zeros(m, dtype=complex)
        g = np.zeros(m + 1, dtype=complex)
        g[0] = beta
        Q[:, 0] = r / beta
        j_done = 0
        converged = False
        for j in range(m):
            z = Q[:, j] if P is None else P.apply(Q[:, j])
            w = A.apply(z)
            wn = np.linalg.norm(w)
            for i in range(j + 1):
                H[i, j] = np.vdot(Q[:, i], w)
                w -= H[i, j] * Q[:, i]
            hn = np.linalg.norm(w)
            H[j + 1, j] = hn
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -np.conj(sn[i]) * H[i, j] + np.conj(cs[i]) * H[i + 1, j]
                H[i, j] = t
            a, c = H[j, j], H[j + 1, j]
            den = np.hypot(abs(a), abs(c))
            if den == 0:
                breakdown = True
                break
            # unitary rotation [[cs, sn], [-conj(sn), conj(cs)]] zeroing the subdiagonal
            cs[j] = np.conj(a) / den
            sn[j] = c / den
            H[j, j] = den
            H[j + 1, j] = 0.0
            g[j + 1] = -np.conj(sn[j]) * g[j]
            g[j] = cs[j] * g[j]
            total += 1
            j_done = j + 1
            res = abs(g[j + 1]) / bnorm
            history.append(min(res, history[-1]))
            happy = hn <= 1e-14 * max(wn, 1e-300)
            if res < tol or happy:
                converged = True
                break
            Q[:, j + 1] = w / hn
            if total >= max_iter:
                break
        if j_done:
            y = sla.solve_triangular(H[:j_done, :j_done], g[:j_done])
            dx = Q[:, :j_done] @ y
            x = x + (dx if P is None else P.apply(dx))
        if breakdown:
            raise BreakdownError("GMRES breakdown: singular Hessenberg system")
        if converged or total >= max_iter:
            true_res = np.linalg.norm(b - A.apply(x)) / bnorm
            ok = converged and true_res < max(tol, 10 * np.finfo(float).eps) * 10
            return SolveReport(x, total, history, bool(ok))


def lu_solve(matrix, b) -> np.ndarray:
    """Dense LU solve; raises ``numpy.linalg.LinAlgError`` for singular matrices."""
    A = np.asarray(matrix)
    b = np.asarray(b)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    with np.errstate(all="raise"), warnings.catch_warnings():
        # exact zero pivots are caught by the check below
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        try:
            lu, piv = sla.lu_factor(A, check_finite=True)
        except (FloatingPointError, ValueError) as exc:
            raise np.linalg.LinAlgError(str(exc)) from exc
    d = np.abs(np.diag(lu))
    if d.min() <= np.finfo(float).eps * d.max() * A.shape[0]:
        raise np.linalg.LinAlgError("matrix is singular to working precision")
    return sla.lu_solve((lu, piv), b)


class _Inverse:
    """Action of ``M^-1`` by inner GMRES (or LU), counting inner iterations."""

    def __init__(self, label, M, settings: SolverSettings, counts: dict):
        self.label = label
        self.M = np.asarray(M)
        self.settings = settings
        self.counts = counts
        counts.setdefault(label, 0)
        self._lu = sla.lu_factor(self.M) if settings.inner_method == "lu" else None

    def __call__(self, v):
        if self._lu is not None:
            return sla.lu_solve(self._lu, v)
        rep = gmres(self.M, v, self.settings.inner_tol, self.settings.inner_max_iter)
        self.counts[self.label] += rep.iterations
        if not rep.converged:
            raise InnerSolveError(self.label, rep)
        return rep.x


class Problem:
    """Matrices of one scattering problem, assembled lazily and cached."""

    def __init__(self, spaces: Spaces, params: MediumParams, wave: PlaneWave | None = None,
                 quadrature: QuadratureSettings = QuadratureSettings(), cache: FormCache | None = None):
        self.spaces = spaces
        self.params = params
        self.wave = wave or PlaneWave.along_z(params.k)
        self.quadrature = quadrature
        self.cache = cache or FormCache()
        self._m: dict[str, np.ndarray] = {}

    @property
    def n(self) -> int:
        return self.spaces.n

    def matrix(self, name: str) -> np.ndarray:
        if name not in self._m:
            self._m[name] = self._build(name)
        return self._m[name]

    def _build(self, name):
        s, p, q, c = self.spaces, self.params, self.quadrature, self.cache
        kw = dict(settings=q, cache=c)
        if name == "A_L2":
            return assemble_efie_l2(s.mesh, s.rwg, p, **kw).data
        if name == "A_Hdiv":
            return assemble_efie_hdiv(s.mesh, s.rwg, s.bc, p, **kw).data
        if name == "A'_L2":
            return assemble_dual_efio("L2", s.mesh, s.rwg, s.bc, p, **kw).data
        if name == "A'_Hdiv":
            return assemble_dual_efio("Hdiv", s.mesh, s.rwg, s.bc, p, **kw).data
        if name == "S_L2":
            return assemble_single_layer(s.mesh, s.bc, p, **kw).data
        if name in ("T_L2", "T'_L2", "T''_L2", "T_Hdiv", "T'_Hdiv"):
            return assemble_gram(name, s, p).data
        if name == "b_L2":
            return assemble_rhs_l2(s.mesh, s.rwg, self.wave).data
        if name == "b_Hdiv":
            return assemble_rhs_hdiv(s.mesh, s.bc, self.wave, p).data
        raise KeyError(name)

    def matrices(self, *names) -> dict[str, np.ndarray]:
        return {n: self.matrix(n) for n in names}


# approach -> (system matrix, rhs, preconditioner factors (inv, mid, inv) or None)
_SYSTEMS = {
    1: ("A_Hdiv", "b_Hdiv", ("T_L2", "S_L2", "T''_L2")),
    2: ("A_Hdiv", "b_Hdiv", ("T_Hdiv", "A'_Hdiv", "T'_Hdiv")),
    3: ("A_L2", "b_L2", ("T_L2", "A'_L2", "T'_L2")),
    4: ("A_Hdiv", "b_Hdiv", None),
    5: ("A_L2", "b_L2", None),
}


def build_preconditioner(approach: int, matrices, settings: SolverSettings = SolverSettings(),
                         counts: dict | None = None) -> LinearOperator:
    """Right preconditioner ``G1^-1 M G2^-1`` of approaches 1 to 3.

    approach 1: ``T_L2^-1 S T''_L2^-1``; approach 2: ``T_Hdiv^-1 A'_Hdiv T'_Hdiv^-1``;
    approach 3: ``T_L2^-1 A'_L2 T'_L2^-1``.  ``matrices`` maps names to arrays (or
    is a :class:`Problem`).  Inner iteration totals accumulate in ``counts``.
    """
    if approach not in (1, 2, 3):
        raise ValueError("only approaches 1, 2 and 3 are preconditioned")
    g1, mid, g2 = _SYSTEMS[approach][2]
    get = matrices.matrix if isinstance(matrices, Problem) else matrices.__getitem__
    counts = {} if counts is None else counts
    inv1 = _Inverse(g1, get(g1), settings, counts)
    inv2 = _Inverse(g2, get(g2), settings, counts)
    M = np.asarray(get(mid))

    def apply(v):
        return inv1(M @ inv2(v))

    op = LinearOperator(M.shape[0], apply, f"P{approach}")
    op.counts = counts
    return op


def solve_approach(approach: int, problem: Problem, settings: SolverSettings = SolverSettings()) -> SolveReport:
    """Solve the system of ``approach`` and return RWG coefficients of the current.

    Approaches 1, 2 and 4 solve the H_div system, 3 and 5 the L2 system; 1 to 3
    are right preconditioned.  Inner solve failures are reported as
    non-convergence, with the failing matrix recorded in ``inner_iterations``.
    """
    if approach not in _SYSTEMS:
        raise ValueError(f"approach must be one of {APPROACHES}")
    A_name, b_name, pre = _SYSTEMS[approach]
    A = problem.matrix(A_name)
    b = problem.matrix(b_name)
    counts: dict[str, int] = {}
    P = build_preconditioner(approach, problem, settings, counts) if pre else None
    if P is not None:
        for name in pre:
            problem.matrix(name)
    t0 = time.perf_counter()
    try:
        rep = gmres(A, b, settings.tol, settings.max_iter, precond=P, restart=settings.restart)
    except InnerSolveError as exc:
        rep = SolveReport(np.full(problem.n, np.nan, dtype=complex), 0, [np.nan], False)
        counts[f"failed:{exc.label}"] = exc.report.iterations
    rep.inner_iterations = dict(counts)
    rep.seconds = time.perf_counter() - t0
    return rep
