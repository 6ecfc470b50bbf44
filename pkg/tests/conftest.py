from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from hflow.ambient import standard_hyperkahler_torus
from hflow.scenarios import ScenarioConfig, build_initial_surface

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def ambient():
    return standard_hyperkahler_torus()


def make_state(initial_map="identity_graph", n=64, scheme="spectral", **kwargs):
    config = ScenarioConfig(initial_map=initial_map, grid_size=(n, n), scheme=scheme, **kwargs)
    return build_initial_surface(config)


def shear(eps1, eps2=0.0, n=64, scheme="spectral", k=1):
    return make_state("shear_graph", n=n, scheme=scheme, epsilon1=eps1, epsilon2=eps2, wavenumber=k)


def with_rho(state, rho):
    return replace(state, rho=np.broadcast_to(np.asarray(rho, dtype=float), state.rho.shape).copy(),
                   rho_gradient=None)


def observed_order(errors, ratio=2.0):
    errors = np.asarray(errors, dtype=float)
    return np.log(errors[:-1] / errors[1:]) / np.log(ratio)


@pytest.fixture
def identity_state():
    return make_state()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
