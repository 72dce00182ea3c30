import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from musrldpc.galois import make_field  # noqa: E402
from musrldpc.nbldpc import LdpcCode  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte-Carlo acceptance runs (minutes)")
    config.addinivalue_line("markers", "fullscale: full-scale runs (hours); opt-in via MUSRLDPC_FULLSCALE=1")


@pytest.fixture(scope="session")
def gf4():
    return make_field(2)


@pytest.fixture(scope="session")
def gf16():
    return make_field(4)


@pytest.fixture(scope="session")
def tree_code(gf4):
    """Chain of three checks over GF(4); its factor graph is a tree."""
    checks = [([0, 1, 2], [1, 2, 3]),
              ([2, 3, 4], [2, 1, 1]),
              ([4, 5, 6], [3, 3, 2])]
    return LdpcCode(gf4, 7, checks)
