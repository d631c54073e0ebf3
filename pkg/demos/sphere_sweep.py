"""Solve scattering from a small PEC sphere with all five approaches and compare with the Mie series."""

from hdivefie.assembly import MediumParams, build_spaces
from hdivefie.mesh import generate_sphere
from hdivefie.mie import MieSeries, relative_error
from hdivefie.solver import Problem, solve_approach

RADIUS, LEVEL = 0.25, 2

spaces = build_spaces(generate_sphere(RADIUS, LEVEL))
print(f"{spaces.n} unknowns")
for k in (0.01, 0.1, 1.0):
    problem = Problem(spaces, MediumParams.from_k(k))
    series = MieSeries(RADIUS, k)
    for approach in (1, 2, 3, 4, 5):
        rep = solve_approach(approach, problem)
        err = relative_error(rep.x, spaces.rwg, spaces.mesh, series) if rep.converged else float("nan")
        print(f"k={k:<5g} approach {approach}: {rep.iterations:4d} outer, {rep.inner_total:5d} inner, "
              f"error {err:.4f}")
