import numpy as np
import pytest

import rollgeom as rg

# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def record(num: int, ok: bool, text: str) -> None:
    ACCEPTANCE_LINES[num] = f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d}: {text}"
    print(ACCEPTANCE_LINES[num])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def cat():
    """Catalog manifolds shared across tests."""
    return {
        "E2": rg.euclidean(2), "E3": rg.euclidean(3), "E1": rg.euclidean(1),
        "S21": rg.sphere(2, 1.0), "S22": rg.sphere(2, 2.0), "S31": rg.sphere(3, 1.0),
        "H21": rg.hyperbolic(2, 1.0), "H31": rg.hyperbolic(3, 1.0),
    }
