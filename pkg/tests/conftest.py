import functools

import numpy as np
import pytest

from gncfgo.sim import generate_scenario, reference_scenario, synthesize_observations

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    prev = _CRITERIA.get(n, (title, "PASS"))
    failed = rep.failed or (rep.when == "call" and rep.skipped)
    _CRITERIA[n] = (title, "FAIL" if failed or prev[1] == "FAIL" else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, status = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d} {status}: {title}")


@functools.lru_cache(maxsize=None)
def _scenario(name, seed):
    geom = generate_scenario(reference_scenario(name, seed=seed))
    epochs, budget = synthesize_observations(geom)
    return geom, epochs, budget


@pytest.fixture(scope="session")
def scenario():
    """``scenario(name, seed=0) -> (geometry, epochs, budget)``, cached per session."""
    return lambda name, seed=0: _scenario(name, seed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
