"""Shared fixtures plus the one-line-per-criterion acceptance report."""

from __future__ import annotations

import numpy as np
import pytest

from plcensemble.dataset import SimConfig, simulate_tlight

_CRITERIA: list[tuple[str, str, float]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = "PASS" if report.outcome == "passed" else "FAIL"
        _CRITERIA.append((marker.args[0], status, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, duration in _CRITERIA:
        terminalreporter.write_line(f"[{status}] {name} ({duration:.1f}s)")


@pytest.fixture(scope="session")
def small_train():
    return simulate_tlight(SimConfig(n_records=3000, rng_seed=11))


@pytest.fixture(scope="session")
def small_test():
    return simulate_tlight(SimConfig(n_records=1000, anomaly_fraction=0.3, rng_seed=12))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
