import pytest
from hypothesis import settings

from trsmse.table import TrsTable, builtin_dataset

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def deployed() -> TrsTable:
    return builtin_dataset("als_deployed")


@pytest.fixture
def nondeployed() -> TrsTable:
    return builtin_dataset("als_nondeployed")


@pytest.fixture
def wtc() -> TrsTable:
    return builtin_dataset("wtc")


@pytest.fixture
def ones() -> TrsTable:
    return TrsTable(1, 1, 1, 1, 1, 1, 1)


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """``check(n, ok, detail)`` records one acceptance line and fails the test when ``ok`` is false."""
    lines = request.config.stash.setdefault(ACCEPTANCE, {})

    def check(n: int, ok: bool, detail: str) -> None:
        lines[n] = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        assert ok, lines[n]

    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
