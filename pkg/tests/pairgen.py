"""Random touching triangle pairs that do not pass through each other."""

import numpy as np


def _height(tri, p):
    n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
    return (p - tri[0]) @ (n / np.linalg.norm(n))


def _one_sided(a, b, min_height=0.05):
    """Vertices of ``b`` not shared with ``a`` lie strictly on one side of the plane of ``a``."""
    free = [p for p in b if not np.any(np.all(np.isclose(a, p, rtol=0, atol=1e-14), axis=1))]
    h = np.array([_height(a, p) for p in free])
    return bool(np.all(h > min_height) or np.all(h < -min_height))


def _area(c):
    return 0.5 * np.linalg.norm(np.cross(c[1] - c[0], c[2] - c[0]))


def random_pair(case: str, seed: int):
    """Corners (cx, cy) and linear traces (fx, fy) for a pair of the given case."""
    rng = np.random.default_rng(seed)
    while True:
        c = rng.random((3, 3))
        if case == "identical":
            cy = c.copy()
        elif case == "edge":
            cy = np.array([c[1], c[0], rng.random(3)])
        elif case == "vertex":
            cy = np.array([c[2], rng.random(3), rng.random(3)])
        else:
            raise ValueError(case)
        if min(_area(c), _area(cy)) < 0.05:
            continue
        if case != "identical" and not (_one_sided(c, cy) and _one_sided(cy, c)):
            continue
        return c, cy, rng.standard_normal((3, 3)), rng.standard_normal((3, 3))
