import numpy as np
import pytest

from chemoflow.grid import Grid


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_faces(grid: Grid, rng, walls_zero=True):
    out = []
    for d in range(grid.dim):
        a = rng.standard_normal(grid.face_shape(d))
        if walls_zero:
            idx = [slice(None)] * grid.dim
            idx[d] = 0
            a[tuple(idx)] = 0.0
            idx[d] = -1
            a[tuple(idx)] = 0.0
        out.append(a)
    return tuple(out)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in range(1, 15):
        terminalreporter.write_line(mod.RESULTS.get(number, f"criterion {number:2d}: FAIL  did not complete"))
