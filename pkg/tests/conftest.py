import numpy as np
import pytest

from wavezoom.config import RunConfig
from wavezoom.grid import GridSpec, TimeGrid

ALIGNED_DOMAIN = GridSpec(-8.0, 8.0, -4.0, 4.0, 41, 21)
ALIGNED_ZONE = GridSpec(-0.8, 7.2, -2.0, 2.0, 21, 11)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def aligned():
    return ALIGNED_DOMAIN, ALIGNED_ZONE


@pytest.fixture
def short_time():
    return TimeGrid(40, 4e-5)


def smoke_config(out, **over):
    d = {
        "sizes": {"train": 4, "test": 2, "mc": 8},
        "dcnr": {"epochs": 2, "epochs_t": 2},
        "wgan": {"epochs": 2},
        "pod": {"n_trees": 5},
        "uq": {"n_z": 8, "bins": 5},
        "output_dir": str(out),
    }
    d.update(over)
    return RunConfig.from_dict(d)


# -- acceptance reporting ----------------------------------------------------------

N_CRITERIA = 10
_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def record_criterion(request):
    """``record(n, ok, detail)`` stores one verdict line and fails the test if not ok."""

    def record(n, ok, detail=""):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash[_RESULTS][n] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        terminalreporter.write_line(results.get(n, f"criterion {n:2d}: FAIL  (not reached)"))
