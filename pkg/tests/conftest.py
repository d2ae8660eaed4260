import time

import pytest

from adaptalloc.control_sim import build_scenario, metrics, run_scenario

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def default_runs():
    """Lazily simulated default scenarios, shared across test modules.

    ``get(case)`` returns ``(trajectory, metrics)``; ``get.elapsed[case]`` is
    the wall time of the simulation.
    """
    cache = {}

    def get(case):
        if case not in cache:
            t0 = time.perf_counter()
            traj = run_scenario(build_scenario(case))
            get.elapsed[case] = time.perf_counter() - t0
            cache[case] = (traj, metrics(traj))
        return cache[case]
    get.elapsed = {}
    return get


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        key = lambda s: int(s.split()[1].rstrip(":"))  # noqa: E731
        for line in sorted(ACCEPTANCE_LINES, key=key):
            terminalreporter.write_line(line)
