import pytest

from ghostproj.ensemble import WindowGeometry, capture_ensemble
from ghostproj.maskgen import MaskClass, MaskSpec, generate_mask
from ghostproj.planner import TargetPattern, make_plan
from ghostproj.targets import dot


@pytest.fixture(scope="session")
def small_mask():
    return generate_mask(MaskSpec(MaskClass.RANDOM_BINARY, 40, 40, seed=3))


@pytest.fixture(scope="session")
def small_ensemble(small_mask):
    geometry = WindowGeometry.raster(40, 40, 10, 10)
    return capture_ensemble(small_mask, geometry)


@pytest.fixture(scope="session")
def dot_plan(small_ensemble):
    target = TargetPattern.from_image(dot())
    return make_plan(small_ensemble, target)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
