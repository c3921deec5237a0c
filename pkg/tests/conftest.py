import numpy as np
import pytest
from hypothesis import settings

from casimirdiff import lifshitz as L
from casimirdiff import materials as M

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

R_SPHERE = 100.9e-6


@pytest.fixture(scope="session")
def catalog():
    return M.builtin_models()


@pytest.fixture(scope="session")
def curves(catalog):
    """Gold vs the two silicon plates on a 1 nm grid from 60 to 150 nm."""
    z = np.arange(60, 151, 1.0) * 1e-9
    geom = L.SpherePlateGeometry(R_SPHERE, z)
    gold = catalog["gold_surrogate"]
    a = L.lifshitz_force(geom, gold, catalog["si_intrinsic_surrogate"])
    b = L.lifshitz_force(geom, gold, catalog["si_doped_b"])
    return a, b


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
