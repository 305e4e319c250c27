from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def data_dir():
    return DATA


CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def report(request):
    """``report(n, ok, detail)`` prints and records one acceptance line."""
    lines = request.config.stash.setdefault(CRITERIA, {})

    def _report(n, ok, detail=""):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.setdefault(n, []).append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(CRITERIA, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        for line in lines[n]:
            terminalreporter.write_line(line)
