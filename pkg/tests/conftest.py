import numpy as np
import pytest

from cams.cams_repr import default_boundaries, extract_cams
from cams.geometry import make_scene
from cams.scripted import laptop_opening_motion


@pytest.fixture(scope="session")
def laptop_scene():
    return make_scene("hinged_laptop")


@pytest.fixture(scope="session")
def laptop_motion(laptop_scene):
    return laptop_opening_motion(laptop_scene)


@pytest.fixture(scope="session")
def laptop_cams(laptop_scene, laptop_motion):
    return extract_cams(laptop_motion, laptop_scene, default_boundaries(laptop_scene.n_stages, 30))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)




ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
