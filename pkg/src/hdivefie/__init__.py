"""Boundary-element EFIE solver with L2 and H_div Galerkin discretisations."""

__version__ = "0.1.0"
