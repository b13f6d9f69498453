import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hdgml.benchmarks import make_case  # noqa: E402
from hdgml.hdg import assemble_trace_system  # noqa: E402
from hdgml.mesh import build_hierarchy  # noqa: E402


@pytest.fixture(scope="session")
def poisson_systems():
    """Example I trace systems keyed by (N, p), built lazily."""
    cache = {}
    case = make_case("I")

    def get(N, p):
        if (N, p) not in cache:
            mesh, hier = build_hierarchy(N)
            cache[N, p] = (assemble_trace_system(mesh, case.coefficients, p), hier)
        return cache[N, p]

    return get


@pytest.fixture(scope="session")
def convection_systems():
    """Example IV (alpha=10) trace systems keyed by (N, p)."""
    cache = {}
    case = make_case("IV", 10.0)

    def get(N, p):
        if (N, p) not in cache:
            mesh, hier = build_hierarchy(N)
            cache[N, p] = (assemble_trace_system(mesh, case.coefficients, p), hier)
        return cache[N, p]

    return get


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance PASS/FAIL lines at the end of the run."""
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULT_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
