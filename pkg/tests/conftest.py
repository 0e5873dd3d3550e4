import numpy as np
import pytest

from chporous.cells import compute_tensors
from chporous.geometry import build_unit_cell


@pytest.fixture(scope="session")
def disc16():
    return build_unit_cell(2, 16, "disc:0.25")


@pytest.fixture(scope="session")
def disc8():
    return build_unit_cell(2, 8, "disc:0.25")


@pytest.fixture(scope="session")
def tensors16(disc16):
    return compute_tensors(disc16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = {}


@pytest.fixture
def accept():
    """Record the outcome of an acceptance criterion; printed in the summary."""
    def _record(num, ok, detail):
        ACCEPTANCE[num] = (bool(ok), detail)
        print(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {num}: {detail}"
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
