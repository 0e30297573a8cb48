import numpy as np
import pytest

from intomo import _backend


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


BACKENDS = ["python"] + (["cython"] if _backend.available("cython") else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


_VERDICTS = []


@pytest.fixture
def verdict(capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    def record(label, ok, detail):
        line = f"{label:42s} {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
