import numpy as np
import pytest

import strata_gn as sg
from strata_gn.gn_ref import (apply_calT, eval_Q_expansion, eval_Qbar,
                              eval_Qbar_expanded, eval_R_expansion, eval_Rbar,
                              expansion_order, layer_fields)
from strata_gn.grid import spectral_deriv


@pytest.fixture(scope="module")
def g2pi():
    return sg.PeriodicGrid(128, 2 * np.pi)


def rand_smooth(grid, rng, amp=1.0, kmax=6):
    x = grid.nodes
    out = np.zeros(grid.n)
    for j in range(1, kmax + 1):
        out += rng.normal() / j * np.cos(2 * np.pi * j * x / grid.length
                                         + rng.uniform(0, 2 * np.pi))
    return amp * out / max(1.0, np.max(np.abs(out)))


class TestCalT:
    def test_constant_flat(self, g2pi):
        h = np.ones(g2pi.n)
        v = np.full(g2pi.n, 1.7)
        out = apply_calT(h, np.zeros(g2pi.n), v, g2pi)
        assert np.max(np.abs(out)) < 1e-13

    def test_unit_depth_second_derivative(self, g2pi):
        v = np.cos(g2pi.nodes)
        out = apply_calT(np.ones(g2pi.n), np.zeros(g2pi.n), v, g2pi)
        assert np.max(np.abs(out - v / 3.0)) < 1e-12

    def test_against_product_rule_expansion(self, g2pi):
        # independent evaluation: expand every derivative before discretizing
        rng = np.random.default_rng(0)
        h = 1.2 + 0.3 * rand_smooth(g2pi, rng)
        bprof = 0.4 * rand_smooth(g2pi, rng)
        v = rand_smooth(g2pi, rng)
        dx = lambda u, o=1: spectral_deriv(u, g2pi, o)
        hx, vx, vxx = dx(h), dx(v), dx(v, 2)
        bx, bxx = dx(bprof), dx(bprof, 2)
        expanded = -(1.0 / (3 * h)) * (3 * h**2 * hx * vx + h**3 * vxx)
        expanded += (1.0 / (2 * h)) * (2 * h * hx * bx * v + h**2 * bxx * v
                                       + h**2 * bx * vx - h**2 * bx * vx)
        expanded += bx**2 * v
        direct = apply_calT(h, bprof, v, g2pi)
        assert np.max(np.abs(direct - expanded)) < 1e-10


class TestQbar:
    def test_zero_velocity(self, std_grid, std_bathy, std_params):
        state = sg.make_state(std_grid, 0.2 * np.cos(std_grid.nodes * 0.1),
                              np.zeros(std_grid.n))
        assert np.max(np.abs(eval_Qbar(state, std_bathy, std_params))) == 0.0

    def test_flat_reduction(self, g2pi):
        p = sg.ModelParams(mu=0.1, eps=0.0, delta=1.0, gamma=0.0, beta=0.0)
        bathy = sg.flat_bathymetry(g2pi)
        v = np.cos(g2pi.nodes)
        state = sg.make_state(g2pi, np.zeros(g2pi.n), v)
        out = eval_Qbar(state, bathy, p)
        assert np.max(np.abs(out - v / 3.0)) < 1e-12   # -(1/3) v_xx

    def test_two_forms_agree(self, std_grid, std_bathy):
        rng = np.random.default_rng(1)
        p = sg.ModelParams(mu=0.1, eps=0.12, delta=1.1, gamma=0.2, beta=0.4, bo=15.0)
        for _ in range(20):
            state = sg.make_state(std_grid, rand_smooth(std_grid, rng, 0.6),
                                  rand_smooth(std_grid, rng, 0.8))
            a = eval_Qbar(state, std_bathy, p)
            b = eval_Qbar_expanded(state, std_bathy, p)
            assert np.max(np.abs(a - b)) < 1e-10

    def test_linearity_in_v(self, std_grid, std_bathy, std_params):
        rng = np.random.default_rng(2)
        z = rand_smooth(std_grid, rng, 0.5)
        v = rand_smooth(std_grid, rng)
        one = eval_Qbar(sg.make_state(std_grid, z, v), std_bathy, std_params)
        three = eval_Qbar(sg.make_state(std_grid, z, 3 * v), std_bathy, std_params)
        assert np.max(np.abs(three - 3 * one)) < 1e-11 * max(1, np.max(np.abs(three)))

    def test_depth_violation_rejected(self, std_grid, std_bathy):
        p = sg.ModelParams(mu=0.1, eps=1.0, delta=1.0, gamma=0.2, beta=0.4, bo=15.0)
        state = sg.make_state(std_grid, np.full(std_grid.n, 2.0),
                              np.ones(std_grid.n))
        with pytest.raises(ValueError, match="H1"):
            layer_fields(state, std_bathy, p)


class TestRbar:
    def test_zero_velocity(self, std_grid, std_bathy, std_params):
        state = sg.make_state(std_grid, 0.2 * np.cos(std_grid.nodes * 0.1),
                              np.zeros(std_grid.n))
        assert np.max(np.abs(eval_Rbar(state, std_bathy, std_params))) == 0.0

    def test_flat_gamma0_reduction(self, g2pi):
        # beta = 0, gamma = 0: Rbar = (h2 w_x)^2/2 - w T[h2,0] w, w = h1 v/h1 = v
        p = sg.ModelParams(mu=0.1, eps=0.2, delta=1.3, gamma=0.0, beta=0.0)
        bathy = sg.flat_bathymetry(g2pi)
        rng = np.random.default_rng(3)
        z = rand_smooth(g2pi, rng, 0.5)
        v = rand_smooth(g2pi, rng)
        state = sg.make_state(g2pi, z, v)
        lf = layer_fields(state, bathy, p)
        direct = eval_Rbar(state, bathy, p)
        expected = 0.5 * (lf.h2 * spectral_deriv(lf.w, g2pi, 1)) ** 2 \
            - lf.w * apply_calT(lf.h2, np.zeros(g2pi.n), lf.w, g2pi)
        assert np.max(np.abs(direct - expected)) < 1e-12


class TestExpansions:
    def test_q_expansion_leading_term(self, g2pi):
        p = sg.ModelParams(mu=0.1, eps=0.0, delta=1.2, gamma=0.4, beta=0.0, bo=20.0)
        bathy = sg.flat_bathymetry(g2pi)
        table = sg.build_coeff_table(p, bathy)
        v = np.cos(2 * g2pi.nodes)
        state = sg.make_state(g2pi, 0.3 * np.sin(g2pi.nodes), v)
        out = eval_Q_expansion(state, bathy, table, p)
        lam = table.lam
        assert np.max(np.abs(out - (-lam * spectral_deriv(v, g2pi, 2)))) < 1e-12

    def test_r_expansion_beta0(self, g2pi):
        p = sg.ModelParams(mu=0.1, eps=0.1, delta=1.2, gamma=0.4, beta=0.0, bo=20.0)
        bathy = sg.flat_bathymetry(g2pi)
        table = sg.build_coeff_table(p, bathy)
        rng = np.random.default_rng(4)
        v = rand_smooth(g2pi, rng)
        state = sg.make_state(g2pi, rand_smooth(g2pi, rng, 0.3), v)
        out = eval_R_expansion(state, bathy, table, p)
        vx = spectral_deriv(v, g2pi, 1)
        vxx = spectral_deriv(v, g2pi, 2)
        expected = (1 - p.gamma) * table.g**2 * (0.5 * vx**2 + v * vxx / 3)
        assert np.max(np.abs(out - expected)) < 1e-13

    def test_layer_field_invariant(self, std_grid, std_bathy, std_params, probe_state):
        lf = layer_fields(probe_state, std_bathy, std_params)
        residual = lf.w * (lf.h1 + std_params.gamma * lf.h2) \
            - lf.h1 * probe_state.v.values
        assert np.max(np.abs(residual)) < 1e-12


class TestExpansionOrder:
    def test_all_claims(self, std_grid, std_bathy, std_params, std_table, probe_state):
        reports = expansion_order(probe_state, std_bathy, std_table, std_params)
        names = {r.claim for r in reports}
        assert names == {"upper_ratio_first_order", "lower_ratio_first_order",
                         "upper_ratio_second_order", "lower_ratio_second_order",
                         "Qbar_vs_expansion", "Rbar_vs_expansion"}
        for r in reports:
            assert r.passed, (r.claim, r.fitted_order, r.errors)

    def test_report_serialization(self, std_grid, std_bathy, std_params, std_table,
                                  probe_state):
        rep = expansion_order(probe_state, std_bathy, std_table, std_params)[0]
        doc = rep.to_dict()
        assert set(doc) == {"claim", "eps", "errors", "orders", "fitted_order",
                            "threshold", "pass"}
