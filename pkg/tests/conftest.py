import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cdmi import harness
from cdmi.harness import ScenarioConfig

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def cfg():
    return ScenarioConfig()


@pytest.fixture(scope="session")
def one_run_scenario(cfg):
    """Order-5 expansion about the one-run estimate (truth + fixed one-run error)."""
    return harness.build_scenario(cfg, np.array(cfg.target_apolune) + np.array(harness.ONE_RUN_ERROR))


def _one_run_case(scn, cfg, name):
    err, dv, noise = harness.one_run_inputs(name, 1)
    return harness.make_case(scn, np.array(cfg.target_apolune), dv, noise, name)


@pytest.fixture(scope="session")
def nonmaneuver_case(one_run_scenario, cfg):
    return _one_run_case(one_run_scenario, cfg, "table4-nonmaneuver")


@pytest.fixture(scope="session")
def maneuver_case(one_run_scenario, cfg):
    return _one_run_case(one_run_scenario, cfg, "table4-maneuver")


@pytest.fixture(scope="session")
def nominal_scenario(cfg):
    return harness.build_scenario(cfg)


@pytest.fixture(scope="session")
def short_scenario():
    """Cheap order-3 scenario over a short arc, for tests that only need plumbing."""
    return harness.build_scenario(ScenarioConfig(t1_periods=0.3, poly_order=3))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
