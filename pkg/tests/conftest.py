import pytest

from hierpim.workloads import generate_all

# lines appended by test_acceptance.py, printed once at the end of the run
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def desk_traces():
    """All eight kernels at desk scale, generated once per session."""
    return generate_all()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: s.split(":")[0]):
        terminalreporter.write_line(line)
