import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

CRITERIA = []  # (name, passed, detail), filled by test_acceptance


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in CRITERIA:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
