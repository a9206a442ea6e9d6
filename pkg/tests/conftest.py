from pathlib import Path

import numpy as np
import pytest

from flashnas import AccuracyPredictor, AreaModel, CostModels, EnergyModel, LatencyModel, degree_array
from flashnas.fixtures import FIXTURE_SPEC, generate

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def fixture_tables():
    return generate(FIXTURE_SPEC, n=180, seed=0, noise=0.03, accuracy_noise=0.002)


@pytest.fixture(scope="session")
def fitted(fixture_tables):
    """Accuracy model and cost models fitted on the noisy fixture tables."""
    tab = fixture_tables
    F = tab.features
    costs = CostModels(LatencyModel().fit(F, tab.latency_ms), EnergyModel().fit(F, tab.energy_mj),
                       AreaModel().fit(F, tab.area_mm2), spec=FIXTURE_SPEC)
    acc = AccuracyPredictor().fit(degree_array(tab.configs, FIXTURE_SPEC), tab.accuracy).model_
    return acc, costs


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    crit = item.get_closest_marker("criterion")
    if crit is None or rep.when != "call":
        return
    n, title = crit.args
    detail = "" if rep.passed else str(call.excinfo.value).splitlines()[0] if call.excinfo else ""
    ACCEPTANCE[n] = (rep.passed, f"{title}" + (f" -- {detail}" if detail else ""))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}")
