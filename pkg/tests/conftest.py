import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gauzecut import cloth, planner
from gauzecut.cloth import ClothParams

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def circle_scenario_path():
    return SCENARIOS / "circle50.yaml"


@pytest.fixture(scope="session")
def line_scenario_path():
    return SCENARIOS / "line.yaml"


@pytest.fixture(scope="session")
def settled_gauze():
    """Default corner-pinned gauze after the standard pre-settle."""
    state = cloth.gauze_mesh()
    return cloth.step(state, 30000)


@pytest.fixture(scope="session")
def circle():
    return planner.circle_pattern(50.0, 100)


@pytest.fixture(scope="session")
def circle_traj(circle):
    return planner.plan(circle)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def contrast_scene():
    """Line pattern inside a pinned block with one free vertex left in it.

    Returns ``(state, line, trajectory, rigid, loose)``: ``rigid`` is the free
    vertex held by its pinned neighbours, ``loose`` sits in the sagging part
    of the gauze.
    """
    n, width = 25, 101.6
    line = planner.line_pattern((0.3, 0.5), (0.7, 0.5))
    rigid = 11 * n + 12
    loose = 20 * n + 3
    pins = [r * n + c for r in range(9, 16) for c in range(5, 20) if r * n + c != rigid]
    pins += [0, n - 1, n * n - n, n * n - 1]
    state = cloth.new_mesh(n, n, width / (n - 1), pins, ClothParams())
    cloth.step(state, 3000)
    return state, line, planner.plan(line), rigid, loose


def pytest_configure(config):
    config._acceptance = {}


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance", {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
