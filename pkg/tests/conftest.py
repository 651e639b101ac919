import contextlib

import pytest

_RESULTS = []


class _Criterion:
    def __init__(self, number, name):
        self.number = number
        self.name = name
        self.detail = ""


@pytest.fixture
def criterion():
    @contextlib.contextmanager
    def run(number, name):
        c = _Criterion(number, name)
        try:
            yield c
        except BaseException:
            _RESULTS.append((number, name, False, c.detail))
            print(f"FAIL criterion {number}: {name} {c.detail}")
            raise
        _RESULTS.append((number, name, True, c.detail))
        print(f"PASS criterion {number}: {name} {c.detail}")

    return run


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(_RESULTS):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"{status} criterion {number}: {name} {detail}".rstrip())
