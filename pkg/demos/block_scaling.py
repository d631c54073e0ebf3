"""Fitted k-exponents of the loop/star blocks of both discretisations on a level-2 sphere."""

from hdivefie.assembly import build_spaces
from hdivefie.diagnostics import block_scaling
from hdivefie.mesh import generate_sphere

spaces = build_spaces(generate_sphere(0.25, 2))
for variant in ("L2", "Hdiv"):
    rep = block_scaling(variant, [spaces], [1e-3, 1e-2, 1e-1])
    fits = rep.k_exponents()
    print(variant, "  ".join(f"{b} {f.slope:+.2f}" for b, f in fits.items()))
