"""Shared fixtures. Meshes and the sensitivity matrix are expensive, so
they are built once per session; tests must not mutate them."""

import numpy as np
import pytest

from eitdm import fem
from eitdm.geometry import SensorGeometry
from eitdm.grids import PixelGrid
from eitdm.mesh import build_mesh
from eitdm.phantoms import BACKGROUND_CONDUCTIVITY

_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def geometry():
    return SensorGeometry()


@pytest.fixture(scope="session")
def grid(geometry):
    return PixelGrid.for_geometry(geometry)


@pytest.fixture(scope="session")
def tiny_mesh(geometry):
    # 128 elements: small enough for dense whole-system oracles
    return build_mesh(geometry, 1.75)


@pytest.fixture(scope="session")
def mid_mesh(geometry):
    return build_mesh(geometry, 0.7)


@pytest.fixture(scope="session")
def jac_mesh(geometry):
    return build_mesh(geometry, 0.22)


@pytest.fixture(scope="session")
def fine_mesh(geometry):
    return build_mesh(geometry, 0.10)


@pytest.fixture(scope="session")
def sens(jac_mesh, geometry):
    ref = np.full(jac_mesh.n_elements, BACKGROUND_CONDUCTIVITY)
    return fem.jacobian(jac_mesh, ref, geometry)


def make_two_disk_scene(seed):
    """Well-separated two-disk scene sized for reliable optical segmentation."""
    from eitdm.phantoms import CircleInclusion, PhantomScene

    rng = np.random.default_rng(seed)
    for _ in range(500):
        r1, r2 = rng.uniform(1.6, 2.1, size=2)
        c = rng.uniform(-4.5, 4.5, size=(2, 2))
        if np.hypot(*c[0]) + r1 > 7.0 - 0.5:
            continue
        if np.hypot(*c[1]) + r2 > 7.0 - 0.5:
            continue
        if np.hypot(c[0, 0] - c[1, 0], c[0, 1] - c[1, 1]) < r1 + r2 + 0.4:
            continue
        return PhantomScene(0.05, (
            CircleInclusion((c[0, 0], c[0, 1]), r1, 0.02),
            CircleInclusion((c[1, 0], c[1, 1]), r2, 0.03)))
    raise RuntimeError("could not place two disks")


@pytest.fixture(scope="session")
def two_disk_scene():
    return make_two_disk_scene
