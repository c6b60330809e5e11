import math

import numpy as np
import pytest

from src.core.geometry import DiskSpec, SectorSpec, l_shape, mesh_disk_mixed, mesh_polygon, mesh_sector, unit_square


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def quarter_sector():
    """theta0 = pi/2, R = 1, h = 0.1, uniform radii."""
    return mesh_sector(SectorSpec(math.pi / 2, 1.0, 0.1, 1.0))


@pytest.fixture
def reentrant_sector():
    """theta0 = 3pi/4, R = 1, h = 0.1, default grading (beta = 3)."""
    return mesh_sector(SectorSpec(3 * math.pi / 4, 1.0, 0.1))


@pytest.fixture
def triangle_lib():
    return pytest.importorskip("triangle")


@pytest.fixture
def unit_disk_mesh(triangle_lib):
    return mesh_disk_mixed(DiskSpec((0.3, -0.2), 1.0, 0.05))


@pytest.fixture
def square_mesh(triangle_lib):
    return mesh_polygon(unit_square(0.1))


@pytest.fixture
def lshape_mesh(triangle_lib):
    return mesh_polygon(l_shape(0.1, 3.0))
