import warnings

import pytest

from xyfluct.lattice import build_rect_domain


@pytest.fixture
def grid3():
    """The 3x3 unit-spacing grid: one interior vertex."""
    return build_rect_domain(2, 1.0, (0, 0), (2, 2))


@pytest.fixture
def grid5():
    return build_rect_domain(2, 1.0, (0, 0), (4, 4))


@pytest.fixture(autouse=True)
def _quiet_diagnostics():
    from xyfluct.sampler import DiagnosticsWarning
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DiagnosticsWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
