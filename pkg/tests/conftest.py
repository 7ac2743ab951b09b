import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from twopatch import DrainTime, Monod, ReducedParams


@pytest.fixture(scope="session")
def monod():
    return Monod(1.0, 1.0)


@pytest.fixture(scope="session")
def drain(monod):
    return DrainTime(monod, 1.0)


@pytest.fixture()
def params03():
    return ReducedParams(r=0.3, d=0.1, s_bar=1.0)
