import os

import pytest

from accelcut import problems


def pytest_report_header(config):
    return f"ACCELCUT_NUMBA={os.environ.get('ACCELCUT_NUMBA', '1')}"


@pytest.fixture
def gen():
    def _gen(kind, seed=0, **size):
        return problems.generate(kind, size, seed)
    return _gen


_ACCEPTANCE = {}


@pytest.fixture
def acceptance(capsys):
    """Record one acceptance criterion; prints a PASS/FAIL line and returns ``ok``."""
    def _record(n, ok, detail=""):
        _ACCEPTANCE[n] = (bool(ok), detail)
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
