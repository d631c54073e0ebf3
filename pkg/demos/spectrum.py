"""Eigenvalues of the approach-1 preconditioned operator and how one cluster follows c k^2 / 4."""

import numpy as np

from hdivefie.assembly import MediumParams, build_spaces
from hdivefie.diagnostics import preconditioned_spectrum, symbol_eigenvalues
from hdivefie.mesh import generate_sphere
from hdivefie.solver import Problem

K = 0.5
spaces = build_spaces(generate_sphere(0.25, 1))
for c_factor in (0.1, 1.0, 10.0):
    params = MediumParams.from_k(K, c_factor=c_factor)
    rep = preconditioned_spectrum(1, Problem(spaces, params))
    far = rep.eigenvalues[np.abs(rep.eigenvalues + 0.25) > 0.15]
    print(f"c = {c_factor:g}/k^2: predicted {params.c * K * K / 4:.3f}, median of moving cluster "
          f"{np.median(far.real):.3f}, {100 * rep.clustered_fraction:.0f}% near the predicted points")

xi = np.array([30.0, 40.0])
print("symbol eigenvalues at c = 1/k^2:", symbol_eigenvalues(1 / K ** 2, K, xi))
print("finite-frequency symbol:", symbol_eigenvalues(1 / K ** 2, K, xi, form="product"))
