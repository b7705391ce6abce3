import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from orbitlab.matgroup import ELEMENTARY_GENERATORS, SANOV_GENERATORS, CongruenceQuotient

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def sl2_mod5():
    q = CongruenceQuotient(5)
    return q, q.left_regular_action(SANOV_GENERATORS)


@pytest.fixture(scope="session")
def sl2_mod3():
    q = CongruenceQuotient(3)
    return q, q.left_regular_action(SANOV_GENERATORS)


@pytest.fixture(scope="session")
def sl2_mod2():
    """SL_2(Z/2) ~ S_3: the Schreier graph of the elementary generators is bipartite."""
    q = CongruenceQuotient(2)
    return q, q.left_regular_action(ELEMENTARY_GENERATORS)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(criterion: int, ok: bool, detail: str):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
