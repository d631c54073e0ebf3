import functools
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

from hdivefie.assembly import MediumParams, build_spaces  # noqa: E402
from hdivefie.mesh import Mesh, generate_sphere  # noqa: E402
from hdivefie.solver import Problem  # noqa: E402

RADIUS = 0.25


@functools.lru_cache(maxsize=None)
def sphere(level: int) -> Mesh:
    return generate_sphere(RADIUS, level)


@functools.lru_cache(maxsize=None)
def spaces(level: int):
    return build_spaces(sphere(level))


@functools.lru_cache(maxsize=None)
def problem(level: int, k: float, c_factor: float = 1.0) -> Problem:
    return Problem(spaces(level), MediumParams.from_k(k, c_factor=c_factor))


@pytest.fixture(scope="session")
def tetra() -> Mesh:
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    f = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return Mesh.from_arrays(v, f)


@pytest.fixture(scope="session")
def s1():
    return spaces(1)


@pytest.fixture(scope="session")
def s2():
    return spaces(2)
