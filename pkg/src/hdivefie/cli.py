"""Command-line experiment driver: frequency sweeps, diagnostics and mesh summaries.

Configuration is a flat ``key = value`` file; command-line flags override it.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .assembly import MediumParams, build_spaces
from .diagnostics import (BLOCKS, block_scaling, gram_conditioning, preconditioned_spectrum, write_gram_csv,
                          write_spectrum_csv)
from .mesh import Mesh, MeshError, generate_sphere, load_mesh, mesh_h
from .mie import MieSeries, relative_error
from .quadrature import QuadratureSettings
from .solver import APPROACHES, Problem, SolverSettings, solve_approach

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ResultRow",
    "SWEEP_COLUMNS",
    "parse_config",
    "load_config",
    "run_sweep",
    "run_diagnostics",
    "mesh_info",
    "write_rows",
    "main",
]

SWEEP_COLUMNS = ("approach", "k", "h", "N", "rel_error", "outer_iters", "inner_iters", "converged", "seconds")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DiagnoseSettings:
    scaling_levels: tuple = (1, 2)
    scaling_ks: tuple = (1e-3, 1e-2, 1e-1)
    gram_ks: tuple = (1e-3, 1e-2, 1e-1)
    spectrum_k: float = 0.5
    spectrum_approach: int = 1
    radius: float = 0.15
    min_fraction: float = 0.8


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment.  ``mesh`` (a file) takes precedence over ``sphere``."""

    ks: tuple = (0.01, 0.1, 1.0)
    approaches: tuple = (1, 2, 3, 4, 5)
    sphere: tuple = (0.25, 2)
    mesh: str | None = None
    c_factor: float = 1.0
    solver: SolverSettings = SolverSettings()
    quadrature: QuadratureSettings = QuadratureSettings()
    out: str = "results"
    deterministic: bool = False
    oracle: str = "auto"
    diagnose: DiagnoseSettings = DiagnoseSettings()

    def __post_init__(self):
        if not self.ks:
            raise ConfigError("the k sweep is empty")
        if any(not (k > 0 and math.isfinite(k)) for k in self.ks):
            raise ConfigError("wavenumbers must be positive")
        if not self.approaches:
            raise ConfigError("no approaches selected")
        bad = [a for a in self.approaches if a not in APPROACHES]
        if bad:
            raise ConfigError(f"unknown approaches {bad}")
        if len(set(self.approaches)) != len(self.approaches) or len(set(self.ks)) != len(self.ks):
            raise ConfigError("approaches and wavenumbers must be unique")
        if self.mesh is None:
            r, lv = self.sphere
            if not r > 0:
                raise ConfigError("sphere radius must be positive")
            if int(lv) != lv or lv < 0:
                raise ConfigError("sphere level must be a nonnegative integer")
        if not self.c_factor > 0:
            raise ConfigError("c_factor must be positive")
        if self.oracle not in ("auto", "mie", "none"):
            raise ConfigError("oracle must be auto, mie or none")

    def build_mesh(self) -> Mesh:
        if self.mesh is not None:
            return load_mesh(self.mesh)
        return generate_sphere(float(self.sphere[0]), int(self.sphere[1]))

    def sphere_radius(self, mesh: Mesh) -> float | None:
        """Radius for the Mie oracle, or None when the scatterer is not a centred sphere."""
        if self.oracle == "none":
            return None
        if self.mesh is None:
            return float(self.sphere[0])
        r = np.linalg.norm(mesh.vertices, axis=1)
        if np.ptp(r) <= 1e-9 * r.max():
            return float(r.mean())
        if self.oracle == "mie":
            raise ConfigError("the Mie oracle needs a mesh inscribed in a centred sphere")
        return None


@dataclass(frozen=True)
class ResultRow:
    approach: int
    k: float
    h: float
    N: int
    rel_error: float | None
    outer_iters: int
    inner_iters: int
    converged: bool
    seconds: float

    def csv_fields(self) -> list[str]:
        err = "" if (not self.converged or self.rel_error is None) else f"{self.rel_error:.10e}"
        return [str(self.approach), f"{self.k:.12g}", f"{self.h:.12g}", str(self.N), err,
                str(self.outer_iters), str(self.inner_iters), "true" if self.converged else "false",
                f"{self.seconds:.3f}"]


# ----------------------------------------------------------------------------
# configuration parsing


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _ints(text: str) -> tuple:
    return tuple(int(t) for t in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def k_range(lo: float, hi: float, n: int) -> tuple:
    """Logarithmically spaced wavenumbers including both ends."""
    if not (lo > 0 and hi >= lo and n >= 1):
        raise ConfigError("k range needs 0 < lo <= hi and at least one point")
    if n == 1:
        return (float(lo),)
    return tuple(float(k) for k in np.geomspace(lo, hi, int(n)))


def _nested(obj, key, value):
    types = {f.name: f.type for f in fields(obj)}
    if key not in types:
        raise ConfigError(f"unknown key {key!r}")
    current = getattr(obj, key)
    if isinstance(current, tuple):
        conv = _ints if all(isinstance(x, int) for x in current) else _floats
    elif isinstance(current, bool):
        conv = _bool
    elif isinstance(current, int):
        conv = int
    elif isinstance(current, float):
        conv = float
    else:
        conv = str
    try:
        return replace(obj, **{key: conv(value)})
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from exc


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse flat ``key = value`` lines (``#`` starts a comment)."""
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        entries[key] = value
    return apply_entries(entries, base or ExperimentConfig())


def apply_entries(entries: dict, cfg: ExperimentConfig) -> ExperimentConfig:
    kw = {}
    solver, quad, diag = cfg.solver, cfg.quadrature, cfg.diagnose
    try:
        for key, value in entries.items():
            if key.startswith("solver."):
                solver = _nested(solver, key[7:], value)
            elif key.startswith("quadrature."):
                quad = _nested(quad, key[11:], value)
            elif key.startswith("diagnose."):
                diag = _nested(diag, key[9:], value)
            elif key == "k":
                kw["ks"] = _floats(value)
            elif key == "k_range":
                lo, hi, n = value.replace(",", " ").split()
                kw["ks"] = k_range(float(lo), float(hi), int(n))
            elif key == "approaches":
                kw["approaches"] = _ints(value)
            elif key == "sphere":
                r, lv = value.replace(",", " ").split()
                kw["sphere"] = (float(r), int(lv))
            elif key == "mesh":
                kw["mesh"] = value or None
            elif key == "c_factor":
                kw["c_factor"] = float(value)
            elif key in ("out", "oracle"):
                kw[key] = value
            elif key == "deterministic":
                kw["deterministic"] = _bool(value)
            else:
                raise ConfigError(f"unknown key {key!r}")
        return replace(cfg, solver=solver, quadrature=quad, diagnose=diag, **kw)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text)


def set_deterministic(flag: bool) -> None:
    """Pin BLAS to one thread so dense products reduce in a fixed order.

    The compiled assembly kernels are serial, so assembly is reproducible either way.
    """
    if flag:
        try:
            from threadpoolctl import threadpool_limits
        except ImportError:
            return
        threadpool_limits(1)


# ----------------------------------------------------------------------------
# experiments


def run_sweep(cfg: ExperimentConfig, *, log=None) -> list[ResultRow]:
    """Assemble and solve every (approach, k) pair and write ``sweep.csv``.

    Non-convergence is recorded in the row rather than raised.
    """
    set_deterministic(cfg.deterministic)
    mesh = cfg.build_mesh()
    radius = cfg.sphere_radius(mesh)
    spaces = build_spaces(mesh)
    h = mesh_h(mesh)
    rows = []
    for k in cfg.ks:
        params = MediumParams.from_k(k, c_factor=cfg.c_factor)
        problem = Problem(spaces, params, quadrature=cfg.quadrature)
        series = MieSeries(radius, k) if radius is not None else None
        for a in cfg.approaches:
            rep = solve_approach(a, problem, cfg.solver)
            err = None
            if rep.converged and series is not None:
                err = relative_error(rep.x, spaces.rwg, mesh, series)
            row = ResultRow(a, float(k), h, spaces.n, err, rep.iterations, rep.inner_total, rep.converged, rep.seconds)
            rows.append(row)
            if log:
                log(",".join(row.csv_fields()))
    write_rows(rows, Path(cfg.out) / "sweep.csv")
    return rows


def write_rows(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow(r.csv_fields())
    return path


def run_diagnostics(cfg: ExperimentConfig, *, log=None) -> dict[str, Path]:
    """Write ``scaling.csv``, ``scaling_fits.csv``, ``spectrum.csv``, ``spectrum_clusters.csv``
    and ``gram_cond.csv`` into the output directory.

    Block scaling uses sphere levels ``diagnose.scaling_levels`` of the configured
    radius (or the configured mesh file alone); the spectrum and Gram tables use
    the configured mesh.
    """
    set_deterministic(cfg.deterministic)
    out = Path(cfg.out)
    d = cfg.diagnose
    mesh = cfg.build_mesh()
    spaces = build_spaces(mesh)
    if cfg.mesh is None:
        ladder = [spaces if lv == int(cfg.sphere[1]) else build_spaces(generate_sphere(float(cfg.sphere[0]), lv))
                  for lv in d.scaling_levels]
    else:
        ladder = [spaces]

    scaling_rows, fit_rows = [], []
    for variant in ("L2", "Hdiv"):
        rep = block_scaling(variant, ladder, d.scaling_ks, c_factor=cfg.c_factor, quadrature=cfg.quadrature)
        scaling_rows += [(f"{variant}.{b}", k, h, v) for b, k, h, v in rep.samples]
        for b in BLOCKS + ("bL", "bS"):
            f = rep.k_fit(b)
            fit_rows.append((variant, b, f.slope, f.r2, f.reliable))
            if log:
                log(f"{variant} {b}: k-exponent {f.slope:+.3f} (R2 {f.r2:.4f})")
    paths = {}
    paths["scaling"] = _write_csv(out / "scaling.csv", ["block", "k", "h", "max_entry"],
                                  [(b, f"{k:.12g}", f"{h:.12g}", f"{v:.12e}") for b, k, h, v in scaling_rows])
    paths["scaling_fits"] = _write_csv(out / "scaling_fits.csv", ["variant", "block", "k_exponent", "r2", "reliable"],
                                       [(v, b, f"{s:.6f}", f"{r:.6f}", str(ok).lower())
                                        for v, b, s, r, ok in fit_rows])

    params = MediumParams.from_k(d.spectrum_k, c_factor=cfg.c_factor)
    problem = Problem(spaces, params, quadrature=cfg.quadrature)
    spectrum = preconditioned_spectrum(d.spectrum_approach, problem, params, radius=d.radius)
    paths["spectrum"] = write_spectrum_csv(spectrum, out / "spectrum.csv")
    paths["spectrum_clusters"] = _write_csv(
        out / "spectrum_clusters.csv", ["center_re", "center_im", "radius", "fraction"],
        [(f"{c.real:.12g}", f"{c.imag:.12g}", f"{d.radius:g}", f"{fr:.6f}") for c, fr in spectrum.fractions.items()]
        + [("all", "", f"{d.radius:g}", f"{spectrum.clustered_fraction:.6f}")])
    if log:
        log(f"spectrum approach {d.spectrum_approach} at k={d.spectrum_k:g}: "
            f"{100 * spectrum.clustered_fraction:.1f}% within {d.radius:g} of the predicted points")

    rows = gram_conditioning(d.gram_ks, spaces, c_factor=cfg.c_factor)
    paths["gram_cond"] = write_gram_csv(rows, out / "gram_cond.csv")
    return paths


def _write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def mesh_info(mesh: Mesh) -> dict:
    from .mesh import barycentric_refine

    refined, _ = barycentric_refine(mesh)
    return {
        "vertices": mesh.n_vertices,
        "edges": mesh.n_edges,
        "triangles": mesh.n_triangles,
        "euler": mesh.euler_characteristic,
        "h": mesh_h(mesh),
        "unknowns": mesh.n_edges,
        "refined_vertices": refined.n_vertices,
        "refined_triangles": refined.n_triangles,
        "max_radius": float(np.linalg.norm(mesh.vertices, axis=1).max()),
    }


# ----------------------------------------------------------------------------
# argument handling


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value configuration file")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--sphere", nargs=2, metavar=("R", "L"), help="icosphere radius and subdivision level")
    src.add_argument("--mesh", help="mesh file (v/f text format)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--deterministic", action="store_true", help="serial kernels, reproducible output")


def _solve_flags(p: argparse.ArgumentParser):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--k-range", nargs=3, metavar=("LO", "HI", "NPTS"), help="log-spaced wavenumbers")
    g.add_argument("--k", help="comma-separated wavenumbers")
    p.add_argument("--approach", help="comma-separated approaches from 1..5")
    p.add_argument("--c-factor", type=float, help="H_div constant c = C / k^2")
    p.add_argument("--tol", type=float, help="outer GMRES tolerance")
    p.add_argument("--max-iter", type=int, help="outer GMRES iteration cap")
    p.add_argument("--oracle", choices=("auto", "mie", "none"), help="reference for the error column")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdivefie", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("sweep", help="solve approaches over a k sweep and write sweep.csv")
    _common(p)
    _solve_flags(p)
    p = sub.add_parser("diagnose", help="write block scaling, spectrum and Gram conditioning CSVs")
    _common(p)
    p.add_argument("--k", help="wavenumber of the spectrum run")
    p.add_argument("--approach", help="approach of the spectrum run (1 or 3)")
    p.add_argument("--c-factor", type=float, help="H_div constant c = C / k^2")
    p = sub.add_parser("mesh-info", help="print mesh statistics")
    _common(p)
    return parser


def config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    e = {}
    if args.sphere:
        e["sphere"] = " ".join(args.sphere)
        e["mesh"] = ""
    if args.mesh:
        e["mesh"] = args.mesh
    if args.out:
        e["out"] = args.out
    if args.deterministic:
        e["deterministic"] = "true"
    if getattr(args, "c_factor", None) is not None:
        e["c_factor"] = str(args.c_factor)
    if args.command == "sweep":
        if args.k_range:
            e["k_range"] = " ".join(args.k_range)
        if args.k:
            e["k"] = args.k
        if args.approach:
            e["approaches"] = args.approach
        if args.tol is not None:
            e["solver.tol"] = str(args.tol)
        if args.max_iter is not None:
            e["solver.max_iter"] = str(args.max_iter)
        if args.oracle:
            e["oracle"] = args.oracle
    elif args.command == "diagnose":
        if args.k:
            e["diagnose.spectrum_k"] = args.k
        if args.approach:
            e["diagnose.spectrum_approach"] = args.approach
    return apply_entries(e, cfg)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.command == "mesh-info":
            for key, val in mesh_info(cfg.build_mesh()).items():
                print(f"{key}: {val:.6g}" if isinstance(val, float) else f"{key}: {val}")
            return 0
        if args.command == "sweep":
            print(",".join(SWEEP_COLUMNS))
            run_sweep(cfg, log=lambda s: print(s, flush=True))
            print(f"wrote {Path(cfg.out) / 'sweep.csv'}", file=sys.stderr)
            return 0
        paths = run_diagnostics(cfg, log=lambda s: print(s, flush=True))
        for p in paths.values():
            print(f"wrote {p}", file=sys.stderr)
        return 0
    except (ConfigError, MeshError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
