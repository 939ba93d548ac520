import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------------------
# shared scenario runs and the acceptance report

_RUNS = {}
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def shipped_run():
    """``shipped_run(name, parameter=None, value=None)`` runs a shipped scenario once per session."""
    from specmpc.scenario import load_scenario
    from specmpc.simulate import run_scenario

    def get(name, parameter=None, value=None):
        key = (name, parameter, value)
        if key not in _RUNS:
            scn = load_scenario(name)
            if parameter is not None:
                scn = scn.with_parameter(parameter, value)
            _RUNS[key] = run_scenario(scn)
        return _RUNS[key]

    return get


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip("ab:"))):
            terminalreporter.write_line(line)
