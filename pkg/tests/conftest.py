import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from eotlab.instances import make_instance
from eotlab.measures import make_gaussian_grid
from eotlab.rates import all_fits, run_sweep, theorem_verdicts

settings.register_profile("eotlab", deadline=None, derandomize=True, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("eotlab")


class SweepBundle:
    def __init__(self, name, **kw):
        self.instance = make_instance(name, **kw)
        self.sweep = run_sweep(self.instance)
        self.fits = all_fits(self.sweep)
        self.report = theorem_verdicts(self.sweep, self.fits, instance=self.instance)


@pytest.fixture(scope="session")
def gaussian1d_run():
    return SweepBundle("gaussian1d")


@pytest.fixture(scope="session")
def lipschitz_run():
    return SweepBundle("gaussian_lipschitz")


@pytest.fixture(scope="session")
def cosh_run():
    return SweepBundle("cosh_compact")


@pytest.fixture(scope="session")
def discrete_run():
    return SweepBundle("discrete2x2")


@pytest.fixture(scope="session")
def std_normal_512():
    return make_gaussian_grid(0.0, 1.0, 6.0, 512)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
