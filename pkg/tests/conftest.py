"""Shared fixtures and the acceptance summary printed at the end of a run."""

import numpy as np
import pytest

from patchdyn.curve import preset_shape

ACCEPTANCE_LINES = []


def record_acceptance(number, name, passed, detail):
    """Print and remember one PASS/FAIL line for an acceptance criterion."""
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {name} -- {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def unit_circle():
    return preset_shape("circle", n=64)


@pytest.fixture
def ellipse():
    return preset_shape("ellipse", n=128, a=2.0, b=1.0)


@pytest.fixture
def perturbed():
    return preset_shape("perturbed_circle", n=128, eps=0.1, m=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
