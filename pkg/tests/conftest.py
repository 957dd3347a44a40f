import functools
import sys

import numpy as np
import pytest

from dirac_sk import gap_search as gs
from dirac_sk import quadratic_spectrum as qs
from dirac_sk.lattice_gauge import LatticeGeometry

J_UNIFORM = (1.0, 1.0, 1.0, 1.0)
J_GENERIC = (3.0, 4.0, 1.0, 2.0)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run hour-scale tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    RESULTS = getattr(mod, "RESULTS", None)
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS.values():
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def geom22():
    return LatticeGeometry(2, 2)


@functools.lru_cache(maxsize=None)
def all_sector_results(J, gamma):
    """(sector bits, zero counts, rates) over every 2x2 sector, cached per session."""
    g = LatticeGeometry(2, 2)
    bits = gs._all_sector_bits(g.n_sector_bits)
    z, r = qs.evaluate_sectors(bits, qs.CouplingParams(J, gamma), g)
    return bits, z, r


@functools.lru_cache(maxsize=None)
def exhaustive_curve(J, gammas):
    return gs.exhaustive_sweep(LatticeGeometry(2, 2), J, np.array(gammas))
