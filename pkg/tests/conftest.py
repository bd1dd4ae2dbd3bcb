import numpy as np
import pytest

from pintegra import backend


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


compiled_only = pytest.mark.skipif(not backend.HAVE_COMPILED, reason="compiled kernel not built")


_CRITERIA = {}


class criterion:
    """Record the PASS/FAIL line of an acceptance criterion (printed at the end of the run)."""

    def __init__(self, number, name, ok, detail=""):
        self.line = f"CRITERION {number} {'PASS' if ok else 'FAIL'}: {name} ({detail})"
        self.number = number

    def __enter__(self):
        _CRITERIA[self.number] = self.line
        print(self.line)
        return self

    def __exit__(self, *exc):
        return False


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
