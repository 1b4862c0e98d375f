import time

import pytest

from l1net.complexity import InnerConfig
from l1net.experiments import (overfit_plan, rate_plan, run_overfit_study, run_rademacher_sweep,
                               run_rate_study, run_sparsity_study, sparsity_plan)

CRITERIA = []


def record_criterion(number, name, passed, detail):
    CRITERIA.append((number, name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(CRITERIA):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {name} -- {detail}")


def _timed(fn, *args, **kwargs):
    start = time.perf_counter()
    result = fn(*args, **kwargs)
    return result, time.perf_counter() - start


@pytest.fixture(scope="session")
def rate_study():
    return _timed(run_rate_study, rate_plan())


@pytest.fixture(scope="session")
def sparsity_study():
    return _timed(run_sparsity_study, sparsity_plan())


@pytest.fixture(scope="session")
def overfit_study():
    return _timed(run_overfit_study, overfit_plan())


RADEMACHER_NS = (64, 128, 256, 512, 1024, 2048, 4096)


@pytest.fixture(scope="session")
def rademacher_sweep():
    return _timed(run_rademacher_sweep, RADEMACHER_NS, 4, 1.0, trials=200, inner=InnerConfig(),
                  seed=0)
