import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

RESULT_LINES = []


def pytest_terminal_summary(terminalreporter):
    if RESULT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in RESULT_LINES:
            terminalreporter.write_line(line)
