"""Shared fixtures: bundled grids, small test grids, and cached Monte Carlo runs."""

from __future__ import annotations

import time

import pytest

from gridmf import default_grid, parse_grid
from gridmf.estimation import MeasurementLayout, build_h
from gridmf.montecarlo import TrialConfig, run_montecarlo

CHAIN3_TEXT = """\
[buses]
1 west
2 center
3 east
[branches]
1 2 0.010 0.050 0.020
2 3 0.012 0.060 0.030
"""

PATH4_TEXT = """\
[buses]
1 a
2 b
3 c
4 d
[branches]
1 2 0.010 0.050 0.020
2 3 0.012 0.060 0.030
3 4 0.008 0.040 0.025
"""

TRIANGLE_TEXT = """\
[buses]
1 i
2 j
3 k
[branches]
1 2 0.010 0.050 0.020
1 3 0.012 0.060 0.030
2 3 0.008 0.040 0.025
"""


@pytest.fixture(scope="session")
def grid7():
    return default_grid()


@pytest.fixture(scope="session")
def layout7(grid7):
    return MeasurementLayout.for_topology(grid7)


@pytest.fixture(scope="session")
def h7(grid7, layout7):
    return build_h(grid7, layout7)


@pytest.fixture(scope="session")
def chain3():
    return parse_grid(CHAIN3_TEXT)


@pytest.fixture(scope="session")
def path4():
    return parse_grid(PATH4_TEXT)


@pytest.fixture(scope="session")
def triangle():
    return parse_grid(TRIANGLE_TEXT)


@pytest.fixture(scope="session")
def mc_default_1000():
    """Default-configuration 1000-trial run shared by statistics tests."""
    config = TrialConfig(trials=1000, seed=42, refine=True)
    start = time.monotonic()
    stats = run_montecarlo(config)
    elapsed = time.monotonic() - start
    return config, stats, elapsed


@pytest.fixture(scope="session")
def mc_noiseless_1000():
    """Noiseless 1000-trial run used for refinement-safety checks."""
    config = TrialConfig(trials=1000, seed=7, sigma=0.0, refine=True)
    return config, run_montecarlo(config)
