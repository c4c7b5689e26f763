import pytest

from nlsnorm.energy import ProblemParams
from nlsnorm.solvers import solve_ground_state, solve_mountain_pass


@pytest.fixture(scope="session")
def p4():
    return ProblemParams(N=4, mu=1.0, q=2.5, c=10.0)


@pytest.fixture(scope="session")
def ground_states(p4):
    return {c: solve_ground_state(p4.replace(c=c)) for c in (5.0, 10.0, 20.0)}


@pytest.fixture(scope="session")
def ground10(ground_states):
    return ground_states[10.0]


@pytest.fixture(scope="session")
def mpass10(p4, ground10):
    return solve_mountain_pass(p4, ground=ground10)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
