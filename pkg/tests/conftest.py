import numpy as np
import pytest

from henon.problem import ProblemParams
from henon.radial import solve_henon_radial


@pytest.fixture(scope="session")
def vp_315():
    """Radial solution for N = 3, alpha = 1, p = 5."""
    return solve_henon_radial(ProblemParams(3, 1.0, 5.0))


@pytest.fixture(scope="session")
def vp_313():
    return solve_henon_radial(ProblemParams(3, 1.0, 3.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        title, ok, detail = RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {title} ({detail})")
