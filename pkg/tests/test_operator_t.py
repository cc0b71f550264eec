import math

import numpy as np
import pytest

import strata_gn as sg
from strata_gn import operator_t
from strata_gn.operator_t import (OperatorSolveError, apply, apply_continuum,
                                  assemble, bilinear, continuity_constant,
                                  discrete_h1mu_sq, rayleigh_floor, solve,
                                  TOperatorCache)


@pytest.fixture(scope="module")
def const_setup():
    """eps = beta = 0, gamma = 0, delta = 1: constant-coefficient operator."""
    grid = sg.PeriodicGrid(128, 2 * np.pi)
    p = sg.ModelParams(mu=0.3, eps=0.0, delta=1.0, gamma=0.0, beta=0.0)
    bathy = sg.flat_bathymetry(grid)
    table = sg.build_coeff_table(p, bathy)
    state = sg.make_state(grid, np.zeros(grid.n), np.zeros(grid.n))
    return grid, p, table, state


@pytest.fixture(scope="module")
def var_setup(std_grid, std_params, std_bathy, std_table):
    x = std_grid.nodes
    state = sg.make_state(std_grid, 0.3 * np.cos(2 * np.pi * x / std_grid.length),
                          0.2 * np.sin(4 * np.pi * x / std_grid.length))
    op = assemble(state, std_table, std_params)
    return std_grid, std_params, std_table, state, op


def test_constant_stencil(const_setup):
    grid, p, table, state = const_setup
    op = assemble(state, table, p)
    nu = 1.0 / 3.0
    assert np.allclose(op.diag, 1.0 + 2 * p.mu * nu / grid.dx**2, rtol=1e-14)
    assert np.allclose(op.off, -p.mu * nu / grid.dx**2, rtol=1e-14)


def test_discrete_symbol_eigenvector(const_setup):
    grid, p, table, state = const_setup
    op = assemble(state, table, p)
    nu = 1.0 / 3.0
    for k in (1, 3, 10):
        v = np.cos(k * grid.nodes)
        symbol = 1.0 + p.mu * nu * (2 - 2 * math.cos(k * grid.dx)) / grid.dx**2
        assert np.max(np.abs(apply(op, v) - symbol * v)) < 1e-12 * symbol


def test_matrix_symmetry_variable_coefficients(var_setup):
    _, _, _, _, op = var_setup
    m = op.matrix()
    assert np.max(np.abs(m - m.T)) == 0.0


def test_bilinear_symmetry_random_pairs(var_setup):
    grid, p, table, state, op = var_setup
    rng = np.random.default_rng(0)
    for _ in range(100):
        u = rng.standard_normal(grid.n)
        w = rng.standard_normal(grid.n)
        a = np.dot(apply(op, u), w)
        b = np.dot(u, apply(op, w))
        assert abs(a - b) <= 1e-12 * max(abs(a), abs(b))


def test_solve_round_trip(var_setup):
    grid, p, table, state, op = var_setup
    rng = np.random.default_rng(1)
    for _ in range(5):
        v = rng.standard_normal(grid.n)
        rhs = apply(op, v)
        back = solve(op, rhs)
        assert np.max(np.abs(back - v)) < 1e-10 * max(1.0, np.max(np.abs(v)))
        assert np.max(np.abs(apply(op, solve(op, v)) - v)) < 1e-10


def test_solve_constant_symbol(const_setup):
    grid, p, table, state = const_setup
    op = assemble(state, table, p)
    nu = 1.0 / 3.0
    k = 4
    rhs = np.cos(k * grid.nodes)
    symbol = 1.0 + p.mu * nu * (2 - 2 * math.cos(k * grid.dx)) / grid.dx**2
    assert np.max(np.abs(solve(op, rhs) - rhs / symbol)) < 1e-12


def test_manufactured_solution_spatial_order(std_params):
    errs = []
    ns = (64, 128, 256, 512)
    for n in ns:
        grid = sg.PeriodicGrid(n, 20 * np.pi)
        bathy = sg.cosine_bathymetry(grid, 0.10, mode=1, base=0.2)
        table = sg.build_coeff_table(std_params, bathy)
        x = grid.nodes
        state = sg.make_state(grid, 0.3 * np.cos(2 * np.pi * x / grid.length),
                              np.zeros(n))
        u_exact = np.sin(4 * np.pi * x / grid.length + 0.3)
        f = apply_continuum(u_exact, state, table, std_params)
        op = assemble(state, table, std_params)
        errs.append(np.max(np.abs(solve(op, f) - u_exact)))
    slope = np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert -slope == pytest.approx(2.0, abs=0.1)


def test_rayleigh_floor_constant_case(const_setup):
    grid, p, table, state = const_setup
    op = assemble(state, table, p)
    nu = 1.0 / 3.0
    floor = rayleigh_floor(op, trials=100, rng=np.random.default_rng(2))
    assert floor >= min(1.0, nu) * 0.95
    # high modes drive the floor to nu (q's are 1): it cannot sit above 1
    assert floor <= 1.0 + 1e-12


def test_rayleigh_floor_approaches_nu(const_setup):
    # with h02 = 1 and nu0 = 1/3 the refined floor sits near 1/3
    grid, p, table, state = const_setup
    big_mu = sg.ModelParams(mu=50.0, eps=0.0, delta=1.0, gamma=0.0, beta=0.0)
    op = assemble(state, table, big_mu)
    floor = rayleigh_floor(op, trials=50, rng=np.random.default_rng(3))
    assert floor == pytest.approx(1 / 3, abs=0.04)


def test_rayleigh_constant_field(var_setup):
    grid, p, table, state, op = var_setup
    v = np.ones(grid.n)
    ratio = np.dot(v, apply(op, v)) / discrete_h1mu_sq(op, v)
    q1eff = table.q1_effective(state, p)
    assert ratio >= np.min(q1eff) - 1e-12
    assert ratio == pytest.approx(float(np.mean(q1eff)), rel=1e-12)


def test_coercivity_floor_when_h2_holds(var_setup):
    grid, p, table, state, op = var_setup
    rep = sg.check_ellipticity(state, None, table, p, h02=0.05)
    assert rep.passed
    h02_attained = rep.floor_found
    nu_min = float(np.min(table.nu))
    floor = rayleigh_floor(op, trials=100, rng=np.random.default_rng(4))
    assert floor >= h02_attained * min(1.0, nu_min) * 0.95


def test_continuity_bound(var_setup):
    grid, p, table, state, op = var_setup
    c0 = continuity_constant(state, table, p)
    rng = np.random.default_rng(5)
    for _ in range(50):
        u = rng.standard_normal(grid.n)
        w = rng.standard_normal(grid.n)
        lhs = abs(np.dot(apply(op, u), w))
        rhs = c0 * math.sqrt(discrete_h1mu_sq(op, u) * discrete_h1mu_sq(op, w))
        assert lhs <= rhs * (1 + 1e-12)


def test_bilinear_matches_spectral_operator(var_setup):
    grid, p, table, state, _ = var_setup
    rng = np.random.default_rng(6)
    u = np.cos(3 * 2 * np.pi * grid.nodes / grid.length)
    w = np.sin(2 * 2 * np.pi * grid.nodes / grid.length + 0.4)
    from strata_gn.grid import quad_inner
    a = bilinear(u, w, state, table, p)
    b = quad_inner(apply_continuum(u, state, table, p), w, grid)
    assert a == pytest.approx(b, rel=1e-10)


def test_indefinite_assembly_rejected(std_grid):
    p = sg.ModelParams(mu=0.2, eps=0.9, delta=1.0, gamma=0.5, beta=0.0)
    bathy = sg.flat_bathymetry(std_grid)
    table = sg.build_coeff_table(p, bathy)
    k1 = float(table.kappa1[0])
    z = np.full(std_grid.n, -3.0 / (0.9 * k1))   # q1 = 1 + kappa1 eps zeta << 0
    state = sg.make_state(std_grid, z, np.zeros(std_grid.n))
    with pytest.warns(RuntimeWarning):
        op = assemble(state, table, p)
    with pytest.raises(OperatorSolveError, match="H2"):
        solve(op, np.ones(std_grid.n))


def test_cache_reuses_assembly(var_setup):
    grid, p, table, state, _ = var_setup
    cache = TOperatorCache()
    a = cache.get(state, table, p)
    b = cache.get(state, table, p)
    assert a is b
    other = sg.make_state(grid, state.zeta.values + 1e-3, state.v.values)
    c = cache.get(other, table, p)
    assert c is not a
