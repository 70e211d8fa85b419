import re

import pytest

# criterion id -> (passed, one-line summary), filled by the acceptance module
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(re.match(r"C(\d+)", k).group(1)), k)):
        ok, line = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {key}: {line}")


@pytest.fixture
def report():
    def _report(key, ok, line):
        ACCEPTANCE[key] = (bool(ok), line)
        print(f"[{'PASS' if ok else 'FAIL'}] {key}: {line}")
        return bool(ok)

    return _report
