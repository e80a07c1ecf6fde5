import pytest

_criteria: list[str] = []


@pytest.fixture(scope="session")
def report_criterion():
    """Record (and print) a one-line verdict for an acceptance criterion."""

    def report(number: int, name: str, passed: bool, detail: str = "") -> bool:
        line = f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {name}" + (f": {detail}" if detail else "")
        _criteria.append(line)
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_criteria):
            terminalreporter.write_line(line)
