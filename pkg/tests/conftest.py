import functools

import numpy as np
import pytest

from tesseract_rg.code import build_code
from tesseract_rg.complex import build_lattice


@functools.lru_cache(maxsize=None)
def lattice(d1, d2, lengths):
    return build_lattice(d1, d2, list(lengths))


@functools.lru_cache(maxsize=None)
def code(d1, d2, lengths):
    return build_code(lattice(d1, d2, lengths))


def tesseract(L):
    return code(2, 2, (L,) * 4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
