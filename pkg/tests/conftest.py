import numpy as np
import pytest

from qvalued.builtin import builtin_field


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=["q2_branch", "q2_cubic", "q3_branch", "q3_quadratic", "mixed", "cylinder3",
                        "shifted_mixed"])
def any_field(request):
    return builtin_field(request.param)


def line_points(n=200, m=3):
    t = np.linspace(0.0, 1.0, n)
    pts = np.zeros((n, m))
    pts[:, 0] = t
    return pts


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
