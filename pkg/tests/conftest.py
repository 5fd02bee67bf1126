import sys
import time

import pytest

from vanetsec.sim import ScenarioConfig, engine


@pytest.fixture(scope="session")
def default_sweep():
    """The bundled default scenario, run once per session; returns (result, seconds)."""
    start = time.perf_counter()
    result = engine.run(ScenarioConfig())
    return result, time.perf_counter() - start


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in sorted(mod.CRITERIA.items()):
        line = mod.RESULTS.get(n, f"criterion {n}: FAIL  {title} (did not complete)")
        terminalreporter.write_line(line)
