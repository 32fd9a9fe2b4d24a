import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from geopriv import build_grid

settings.register_profile("ci", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

LN2 = float(np.log(2.0))


@pytest.fixture
def line3():
    return build_grid(rows=1, cols=3)


@pytest.fixture
def line2():
    return build_grid(rows=1, cols=2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.outcome != "passed"):
        return
    number, title = mark.args
    results = item.config._criteria
    prev = results.get(number, (title, "PASS"))[1]
    status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
    if prev == "FAIL" or (prev == "SKIP" and status == "PASS"):
        status = prev
    results[number] = (title, status)


def pytest_terminal_summary(terminalreporter, config):
    results = config._criteria
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, status = results[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {title}")
