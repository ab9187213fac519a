"""Shared fixtures; expensive assemblies are session-scoped."""

import numpy as np
import pytest

from multimag import (
    icosphere_volume,
    kuhn_cube,
    make_multiscale_workspace,
    make_strayfield_workspace,
    reference_tet,
)


@pytest.fixture(scope="session")
def ref_tet():
    return reference_tet()


@pytest.fixture(scope="session")
def cube1():
    return kuhn_cube(1)


@pytest.fixture(scope="session")
def cube2():
    return kuhn_cube(2)


@pytest.fixture(scope="session")
def sphere1():
    # 85 nodes, 320 tets, 80 boundary faces
    return icosphere_volume(1, n_radial=2)


@pytest.fixture(scope="session")
def sphere2():
    # 1280 tets, 320 boundary faces; fine enough for the 10% sphere oracle
    return icosphere_volume(2, n_radial=2)


@pytest.fixture(scope="session")
def sphere_ws(sphere1):
    return make_strayfield_workspace(sphere1, "fk")


@pytest.fixture(scope="session")
def pair_ws(sphere1):
    far = icosphere_volume(1, n_radial=2, center=(3.0, 0.0, 0.0))
    return make_multiscale_workspace(sphere1, far)


def random_unit_field(mesh, seed):
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(mesh.n_nodes, 3))
    return values / np.linalg.norm(values, axis=1, keepdims=True)
