import numpy as np
import pytest

from threespheres.ballstats import profile
from threespheres.models import Geometry, RadiiTriple, SourceRole, StructuralParams
from threespheres.radial import fundamental_solution

HADAMARD_RADII = (1.0, 1.5, 2.0, 3.0, 4.0)


def all_triples(radii):
    radii = sorted(radii)
    return [
        RadiiTriple(r1=a, r2=b, r3=c)
        for i, a in enumerate(radii)
        for j, b in enumerate(radii[i + 1 :], start=i + 1)
        for c in radii[j + 1 :]
    ]


@pytest.fixture
def border_params():
    return StructuralParams(n=2, p=2.0)


@pytest.fixture
def sub_n_params():
    return StructuralParams(n=3, p=2.0)


@pytest.fixture
def p_gt_n_params():
    return StructuralParams(n=2, p=4.0)


@pytest.fixture
def log_profile(border_params):
    """log r on [1, 4], sampled on the sphere radii 1, 2, 4."""
    return profile(
        fundamental_solution(border_params, 0.0, -1.0),
        None,
        [1.0, 2.0, 4.0],
        Geometry.SPHERE_MAX,
        role=SourceRole.SOLUTION,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
