import sys

import numpy as np
import pytest

from carrying_simplex.model import decoupled_logistic, lv_seasonal, lv_smooth
from carrying_simplex.poincare import normalize_spec
from carrying_simplex.simplex import construct_sigma, direction_grid, section_family

LV_A = [[1.0, 0.5], [0.5, 1.0]]


def make_logistic():
    return decoupled_logistic(2)


def make_lv():
    return lv_smooth([1.0, 1.0], LV_A)


def make_seasonal():
    return lv_seasonal([1.0, 1.0], 0.5, [3.0, 3.0], LV_A)


SPECS = {"logistic": make_logistic, "lv": make_lv, "seasonal": make_seasonal}


@pytest.fixture(scope="session")
def specs():
    return {k: f() for k, f in SPECS.items()}


@pytest.fixture(scope="session")
def normalized(specs):
    return {k: normalize_spec(s)[0] for k, s in specs.items()}


@pytest.fixture(scope="session")
def small_meshes(normalized):
    """``(sigma0, history, family)`` per spec at resolution 64."""
    out = {}
    for k, ns in normalized.items():
        sig, hist = construct_sigma(ns, direction_grid(2, 64), tol=1e-9)
        out[k] = (sig, hist, section_family(ns, sig, 16))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
