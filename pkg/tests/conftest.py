import pytest

_RESULTS = {}


@pytest.fixture
def criterion():
    """Record the outcome of an acceptance criterion; each gets one PASS/FAIL line in the summary."""

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"AC{number} {'PASS' if passed else 'FAIL'}: {detail}"
        _RESULTS[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_RESULTS):
            terminalreporter.write_line(_RESULTS[number])
