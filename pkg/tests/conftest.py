import pytest
from hypothesis import settings

from seqsense.model import reference_pair

# compiled kernels load on first call, which can exceed hypothesis' default deadline
settings.register_profile("seqsense", deadline=None, max_examples=60)
settings.load_profile("seqsense")

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def pair():
    return reference_pair()


@pytest.fixture
def verdict_line():
    """Record one acceptance line; every line is echoed in the terminal summary."""

    def record(name: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
