import math

import numpy as np
import pytest

from isodimer.geometry import (
    Hexagon,
    build_lozenge_with_diagonals,
    build_periodic_lozenge_with_diagonals,
    build_square_lattice,
    build_triangular_lattice,
)
from isodimer.sampler import RngStream, sample_lozenge_tiling


def macmahon(a, b, c):
    """Number of lozenge tilings of an a, b, c hexagon."""
    num = 1
    for i in range(1, a + 1):
        for j in range(1, b + 1):
            for k in range(1, c + 1):
                num *= (i + j + k - 1) / (i + j + k - 2)
    return round(num)


@pytest.fixture(scope="session")
def tri_hex():
    return build_triangular_lattice(Hexagon(4, 4, 4))


@pytest.fixture(scope="session")
def square8():
    return build_square_lattice((8, 8))


@pytest.fixture(scope="session")
def lozenge_diag():
    return build_periodic_lozenge_with_diagonals((5, 5))


@pytest.fixture(scope="session")
def random_lozenge_diag():
    tiling = sample_lozenge_tiling(Hexagon(4, 4, 4), RngStream(5))
    return build_lozenge_with_diagonals(tiling)


def central_white(g):
    fz = g.face_z()
    return int(g.whites[np.argmin(np.abs(fz[g.whites] - fz.mean()))])


SQRT3 = math.sqrt(3.0)


# acceptance results, filled in by test_acceptance.py and printed at the end of the run
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {n:2d}. {name}: {detail}")
