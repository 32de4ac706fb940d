import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")

_RESULTS: dict = {}


class CriterionRecorder:
    """Collects one pass/fail line per acceptance criterion."""

    def __init__(self, store):
        self.store = store

    def record(self, key: str, passed: bool, detail: str = "") -> None:
        prev = self.store.get(key)
        if prev is not None:
            passed = passed and prev[0]
            detail = f"{prev[1]}; {detail}" if prev[1] else detail
        self.store[key] = (bool(passed), detail)


@pytest.fixture(scope="session")
def criteria():
    return CriterionRecorder(_RESULTS)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_RESULTS, key=lambda k: int(k.split()[0])):
        ok, detail = _RESULTS[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key}  {detail}")
