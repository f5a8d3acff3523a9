import pytest

from stablequant.mcculloch import default_tables


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture(scope="session")
def tables():
    return default_tables()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line; all lines are echoed in the terminal summary."""
    lines = request.config._acceptance_lines

    def record(label: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
