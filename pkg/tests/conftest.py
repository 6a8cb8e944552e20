import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_VERDICTS = {}


def record(n, ok, detail):
    """Store the verdict line for acceptance criterion ``n``."""
    _VERDICTS[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(_VERDICTS[n])


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[n])
