import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rhe_bench.image import IntensityPatch

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_patch(gen: np.random.Generator, bit_depth: int = 8, max_side: int = 24) -> IntensityPatch:
    """Random patch with a random number of distinct levels (sometimes constant)."""
    h, w = gen.integers(1, max_side + 1, size=2)
    top = (1 << bit_depth) - 1
    levels = gen.choice(top + 1, size=int(gen.integers(1, min(h * w, 40) + 1)), replace=False)
    return IntensityPatch(gen.choice(levels, size=(h, w)), bit_depth)


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(name, passed, detail)``."""

    def record(name, passed, detail=""):
        request.config.stash[ACCEPTANCE].append((name, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in lines:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
