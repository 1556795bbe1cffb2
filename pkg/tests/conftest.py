import pytest

CRITERIA = {}


@pytest.fixture
def criterion():
    """Record one acceptance verdict; the summary prints one line per criterion."""

    def record(label: str, passed: bool, detail: str) -> bool:
        CRITERIA[str(label)] = (bool(passed), detail)
        print(f"criterion {label}: {'PASS' if passed else 'FAIL'} {detail}")
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")

    def order(label):
        head, _, tail = label.partition(" ")
        return int(head), tail

    for label in sorted(CRITERIA, key=order):
        passed, detail = CRITERIA[label]
        terminalreporter.write_line(f"criterion {label}: {'PASS' if passed else 'FAIL'} {detail}")
