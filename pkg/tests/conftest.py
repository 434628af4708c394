"""Shared fixtures: trained controller models and the paired hot-humid week."""
from __future__ import annotations

import time
import warnings

import pytest

from humidmpc import simkit

HOT_WEEK = dict(profile="hot_humid", days=7, seed=3)

# Acceptance verdicts collected during the run and echoed in the terminal summary.
VERDICTS: dict[int, str] = {}


def record(number, ok, detail):
    line = f"CRITERION {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[number])


@pytest.fixture(scope="session")
def trained():
    """(models, training seconds) from the default two-pass training run."""
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        models, _ = simkit.train_controller_models()
    return models, time.perf_counter() - start


@pytest.fixture(scope="session")
def models(trained):
    return trained[0]


class WeekRuns:
    """Lazily simulated hot-week arms, keyed by (controller, mode)."""

    def __init__(self, models):
        self.models = models
        self.logs = {}
        self.seconds = {}

    def get(self, controller, mode):
        key = (controller, mode)
        if key not in self.logs:
            sc = simkit.ScenarioConfig(name=f"{controller}-{mode}", controller=controller, mode=mode, **HOT_WEEK)
            start = time.perf_counter()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                self.logs[key] = simkit.run_closed_loop(sc, None if controller == "benchmark" else self.models)
            self.seconds[key] = time.perf_counter() - start
        return self.logs[key]


@pytest.fixture(scope="session")
def hot_week(models):
    return WeekRuns(models)
