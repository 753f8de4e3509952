import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from athermal_markov import experiments

RUNTIMES: dict[str, float] = {}


def _timed(name, fn):
    t0 = time.monotonic()
    result = fn()
    RUNTIMES[name] = time.monotonic() - t0
    return result


@pytest.fixture(scope="session")
def fig2_result():
    return _timed("fig2", experiments.run_fig2)


@pytest.fixture(scope="session")
def fig3_result():
    return _timed("fig3", experiments.run_fig3)


@pytest.fixture(scope="session")
def distance_result():
    return _timed("distance", experiments.run_distance_example)


@pytest.fixture(scope="session")
def property_result():
    return _timed("properties", experiments.run_property_suite)
