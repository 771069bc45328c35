import numpy as np
import pytest

from lmmg.fespace import FeSpace, nodal_interpolant
from lmmg.mesh import create_square_mesh
from lmmg.problem import EnergyForm, get_problem


def sine(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y)


def unit_sine(form):
    v = nodal_interpolant(form.space, sine)
    return form.space.function(v.coeffs / form.norm(v))


@pytest.fixture(scope="session")
def fine_lane_emden():
    """Lane-Emden energy on a 72x72-division mesh (10368 elements)."""
    space = FeSpace(create_square_mesh((0, 0), (1, 1), 72))
    return EnergyForm(get_problem("lane_emden"), space)


@pytest.fixture
def coarse_form():
    def make(name, divisions=4, **kw):
        pb = get_problem(name, **kw)
        lo, hi = pb.domain
        return EnergyForm(pb, FeSpace(create_square_mesh(lo, hi, divisions)))

    return make


ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
