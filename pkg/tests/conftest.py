import pytest

from cvsrn.core import Model
from cvsrn.models import builtin_model


@pytest.fixture(scope="session")
def birthdeath():
    return builtin_model("birthdeath")


@pytest.fixture(scope="session")
def dimerization():
    return builtin_model("dimerization")


@pytest.fixture(scope="session")
def distmod():
    return builtin_model("distmod")


@pytest.fixture(scope="session")
def inert():
    """One species, no reactions, held at 3."""
    return Model(species=("X",), reactions=(), initial_state=(3,))


_CRITERIA: dict = {}


@pytest.fixture(scope="session")
def criteria():
    return _CRITERIA


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: int(k.split()[0][1:])):
        ok, detail = _CRITERIA[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")
