import numpy as np
import pytest

import strata_gn as sg


@pytest.fixture(scope="session")
def std_grid():
    return sg.PeriodicGrid(256, 20 * np.pi)


@pytest.fixture(scope="session")
def std_params():
    """Comfortably admissible topographic parameter set used across suites."""
    return sg.ModelParams(mu=0.04, eps=0.15, delta=1.1, gamma=0.2, beta=0.4,
                          bo=15.0, M=1.0, nu0=0.05,
                          caps=sg.RegimeCaps(mu_max=0.25, delta_min=0.5,
                                             delta_max=2.0, bo_min=1.0,
                                             beta_max=0.5, eps_max=1.0))


@pytest.fixture(scope="session")
def std_bathy(std_grid):
    return sg.cosine_bathymetry(std_grid, 0.10, mode=1, base=0.2)


@pytest.fixture(scope="session")
def std_table(std_params, std_bathy):
    return sg.build_coeff_table(std_params, std_bathy)


@pytest.fixture(scope="session")
def probe_state(std_grid):
    x = std_grid.nodes
    k1 = 2 * np.pi / std_grid.length
    zeta = 0.35 * np.cos(k1 * x + 1.1) + 0.15 * np.sin(3 * k1 * x)
    v = 0.3 * np.sin(2 * k1 * x + 0.4) + 0.15 * np.cos(k1 * x)
    return sg.make_state(std_grid, zeta, v)
