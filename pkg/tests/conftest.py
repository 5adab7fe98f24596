"""Shared fields and trajectories (solved once per session)."""

import sys

import numpy as np
import pytest

from hjbopt.grid import RectGrid
from hjbopt.objectives import builtin_objective
from hjbopt.solver import solve
from hjbopt.trajectory import integrate_gradient_flow

LAM = 0.1


@pytest.fixture(scope="session")
def riccati_obj():
    return builtin_objective("riccati_dist", c=1.0, dim=1)


@pytest.fixture(scope="session")
def riccati_field(riccati_obj):
    return solve(riccati_obj, RectGrid(riccati_obj.lower, riccati_obj.upper, [401]), LAM)


@pytest.fixture(scope="session")
def riccati_field_fine(riccati_obj):
    return solve(riccati_obj, RectGrid(riccati_obj.lower, riccati_obj.upper, [801]), LAM)


@pytest.fixture(scope="session")
def riccati_flow(riccati_obj, riccati_field_fine):
    return integrate_gradient_flow(riccati_field_fine, riccati_obj, [1.0], 20.0, 1e-3)


@pytest.fixture(scope="session")
def dw_obj():
    return builtin_objective("double_well")


@pytest.fixture(scope="session")
def dw_field(dw_obj):
    return solve(dw_obj, RectGrid(dw_obj.lower, dw_obj.upper, [401]), LAM)


@pytest.fixture(scope="session")
def dw_flow(dw_obj, dw_field):
    return integrate_gradient_flow(dw_field, dw_obj, [0.5], 40.0, 1e-3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
