import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import strata_gn as sg
from strata_gn.params import bottom_discriminant, bottom_forbidden_roots


def mk(mu=0.1, eps=0.3, delta=1.0, gamma=0.5, beta=0.2, bo=math.inf, **kw):
    caps = kw.pop("caps", sg.RegimeCaps(mu_max=1.0, delta_min=0.5, delta_max=2.0,
                                        bo_min=1.0, beta_max=1.0))
    return sg.ModelParams(mu=mu, eps=eps, delta=delta, gamma=gamma, beta=beta,
                          bo=bo, caps=caps, **kw)


class TestRegimeSW:
    def test_benign_passes(self):
        rep = sg.check_regime_sw(mk())
        assert rep.passed and not rep.violations

    def test_gamma_one_fails(self):
        rep = sg.check_regime_sw(mk(gamma=1.0))
        assert not rep.passed
        assert any(v.quantity == "gamma" for v in rep.violations)

    def test_mu_zero_fails(self):
        rep = sg.check_regime_sw(mk(mu=0.0))
        assert not rep.passed
        assert any(v.quantity == "mu" for v in rep.violations)


class TestRegimeCH:
    def test_passes_with_flat_nu(self):
        p = mk(mu=0.04, eps=0.2, gamma=0.0, delta=1.0, beta=0.0, M=1.0, nu0=0.1)
        rep = sg.check_regime_ch(p, np.full(8, 1 / 3))
        assert rep.passed
        assert rep.floor_found == pytest.approx(1 / 3)

    def test_amplitude_slaving_fails(self):
        p = mk(mu=0.01, eps=0.2, gamma=0.0, delta=1.0, beta=0.0, M=1.0, nu0=0.1)
        rep = sg.check_regime_ch(p, np.full(8, 1 / 3))
        assert not rep.passed
        assert any("eps" in v.quantity for v in rep.violations)

    def test_nu_floor_fails(self):
        p = mk(mu=0.04, eps=0.2, nu0=0.1)
        nu = np.full(16, 1 / 3)
        nu[5] = 0.05
        rep = sg.check_regime_ch(p, nu)
        assert not rep.passed
        bad = [v for v in rep.violations if v.quantity == "nu floor"]
        assert bad and bad[0].index == 5

    @given(mu=st.floats(0.001, 2.0), eps=st.floats(0.0, 1.5),
           gamma=st.floats(0.0, 1.2), beta=st.floats(0.0, 1.5))
    @settings(max_examples=60, deadline=None)
    def test_ch_implies_sw(self, mu, eps, gamma, beta):
        p = mk(mu=mu, eps=eps, gamma=gamma, beta=beta, M=1.0, nu0=0.05)
        ch = sg.check_regime_ch(p, np.full(4, 1 / 3))
        if ch.passed:
            assert sg.check_regime_sw(p).passed


class TestBottomAdmissibility:
    def test_root_arithmetic_gamma0(self):
        # gamma=0, delta=1, bo=3: discriminant positive, roots {0, 2}
        p = mk(gamma=0.0, delta=1.0, bo=3.0, beta=0.3)
        assert bottom_discriminant(p) > 0
        assert bottom_forbidden_roots(p) == pytest.approx([0.0, 2.0])
        # at these parameters nu = 1/3 - 1/3 vanishes identically, so the
        # checker must flag "nu(b) != 0" even though the roots are avoided
        rep = sg.check_bottom_admissibility(p, np.linspace(0.1 / 0.3, 0.5 / 0.3, 32))
        assert not rep.passed
        assert any("nu" in v.quantity for v in rep.violations)

    def test_passes_away_from_roots(self):
        p = mk(gamma=0.0, delta=1.0, bo=30.0, beta=0.4)
        b = np.linspace(0.25, 1.25, 64)     # beta*b in [0.1, 0.5]
        roots = bottom_forbidden_roots(p)
        assert all(r > 0.5 or r < 0.1 for r in roots)
        rep = sg.check_bottom_admissibility(p, b)
        assert rep.passed

    def test_flat_spot_fails(self):
        p = mk(gamma=0.0, delta=1.0, bo=30.0, beta=0.4)
        b = np.linspace(0.0, 1.0, 16)
        rep = sg.check_bottom_admissibility(p, b)
        assert not rep.passed
        assert any(v.quantity == "beta*b != 0" for v in rep.violations)

    def test_beta_zero_not_applicable(self):
        p = mk(beta=0.0)
        rep = sg.check_bottom_admissibility(p, np.linspace(-1, 1, 8))
        assert rep.passed and not rep.applicable

    def test_infinite_bo_limit(self):
        # scaled discriminant tends to (gamma*delta^2)^2 > 0 and the roots
        # to 1/delta and (1+gamma*delta)/delta
        p = mk(gamma=0.5, delta=1.25, bo=math.inf)
        roots = bottom_forbidden_roots(p)
        assert roots == pytest.approx([1 / 1.25, (1 + 0.5 * 1.25) / 1.25])


class TestDepth:
    def test_rest_state(self, std_grid):
        p = mk(eps=0.0, delta=1.0, beta=0.0)
        st_ = sg.make_state(std_grid, np.zeros(std_grid.n), np.zeros(std_grid.n))
        bathy = sg.flat_bathymetry(std_grid)
        rep = sg.check_depth(st_, bathy, p, h01=0.9)
        assert rep.passed
        assert rep.floor_found == pytest.approx(1.0)

    def test_moderate_elevation(self, std_grid):
        p = mk(eps=0.1, delta=1.0, beta=0.0)
        st_ = sg.make_state(std_grid, np.full(std_grid.n, 0.5), np.zeros(std_grid.n))
        rep = sg.check_depth(st_, sg.flat_bathymetry(std_grid), p, h01=0.9)
        assert rep.passed
        assert rep.floor_found == pytest.approx(0.95)

    def test_dry_lower_layer(self, std_grid):
        p = mk(eps=0.5, delta=1.0, beta=0.0)
        st_ = sg.make_state(std_grid, np.full(std_grid.n, -3.0), np.zeros(std_grid.n))
        rep = sg.check_depth(st_, sg.flat_bathymetry(std_grid), p, h01=0.05)
        assert not rep.passed
        assert any(v.quantity == "h2" for v in rep.violations)


class TestEllipticity:
    def test_trivial_when_corrections_vanish(self, std_grid):
        p = mk(eps=0.0, beta=0.0, gamma=0.3, delta=1.2)
        bathy = sg.flat_bathymetry(std_grid)
        table = sg.build_coeff_table(p, bathy)
        st_ = sg.make_state(std_grid, np.zeros(std_grid.n), np.zeros(std_grid.n))
        rep = sg.check_ellipticity(st_, bathy, table, p, h02=1.0)
        assert rep.passed
        assert rep.floor_found == pytest.approx(1.0)

    def test_large_amplitude_fails(self, std_grid):
        p = mk(eps=0.9, beta=0.0, gamma=0.5, delta=1.0)
        bathy = sg.flat_bathymetry(std_grid)
        table = sg.build_coeff_table(p, bathy)
        # kappa1 is a nonzero constant at beta=0; push kappa1*eps*zeta < -1
        k1 = float(table.kappa1[0])
        assert k1 != 0
        z = np.full(std_grid.n, -2.0 / (0.9 * k1))
        st_ = sg.make_state(std_grid, z, np.zeros(std_grid.n))
        rep = sg.check_ellipticity(st_, bathy, table, p, h02=0.05)
        assert not rep.passed
        assert any(v.quantity == "q1 floor" for v in rep.violations)


class TestSymmetrizer:
    def test_rest_value(self, std_grid):
        p = mk(eps=0.0, beta=0.0, gamma=0.0, delta=1.0)
        bathy = sg.flat_bathymetry(std_grid)
        table = sg.build_coeff_table(p, bathy)
        st_ = sg.make_state(std_grid, np.zeros(std_grid.n), np.zeros(std_grid.n))
        rep = sg.check_symmetrizer_positivity(st_, table, p, h03=1.0)
        assert rep.passed
        assert rep.floor_found == pytest.approx(1.0)   # Q0 = gamma + delta = 1

    def test_capF_vanishes_at_beta0(self, std_grid):
        # every term of the forcing bracket carries beta, so Q0 = (g+d) q1
        p = mk(eps=0.2, beta=0.0, gamma=0.4, delta=1.3, mu=0.3)
        bathy = sg.flat_bathymetry(std_grid)
        table = sg.build_coeff_table(p, bathy)
        st_ = sg.make_state(std_grid, 0.3 * np.cos(std_grid.nodes * 2 * np.pi / std_grid.length),
                            np.zeros(std_grid.n))
        q0 = table.q0(st_, p)
        assert np.allclose(q0, (p.gamma + p.delta) * table.q1(st_, p), atol=1e-14)

    def test_large_velocity_fails(self, std_grid):
        p = mk(eps=0.5, beta=0.0, gamma=0.5, delta=1.0)
        bathy = sg.flat_bathymetry(std_grid)
        table = sg.build_coeff_table(p, bathy)
        st_ = sg.make_state(std_grid, np.zeros(std_grid.n), np.full(std_grid.n, 12.0))
        rep = sg.check_symmetrizer_positivity(st_, table, p, h03=0.05)
        assert not rep.passed


class TestLemma41:
    def test_zero_profile_passes(self, std_grid):
        p = mk(eps=0.1, beta=0.3, gamma=0.2, delta=1.1, bo=15.0,
               caps=sg.RegimeCaps(mu_max=0.25, delta_min=0.5, delta_max=2.0,
                                  bo_min=1.0, beta_max=0.5))
        bathy = sg.cosine_bathymetry(std_grid, 0.02, mode=1, base=0.08)
        table = sg.build_coeff_table(p, bathy)
        st_ = sg.make_state(std_grid, np.zeros(std_grid.n), np.zeros(std_grid.n))
        rep = sg.check_lemma41_sufficient(st_, bathy, table, p, h0=0.05)
        assert rep.passed

    def test_large_amplitude_fails(self, std_grid, std_params, std_bathy, std_table):
        big = sg.make_state(std_grid, np.full(std_grid.n, 3.0), np.zeros(std_grid.n))
        rep = sg.check_lemma41_sufficient(big, std_bathy, std_table, std_params, h0=0.1)
        assert not rep.passed


def test_reports_are_pure(std_grid):
    p = mk()
    a = sg.check_regime_sw(p).to_dict()
    b = sg.check_regime_sw(p).to_dict()
    assert a == b


def test_report_serialization_schema(std_grid):
    rep = sg.check_regime_sw(mk(gamma=1.0))
    doc = rep.to_dict()
    assert set(doc) >= {"check", "passed", "floor_found", "violations"}
    assert doc["violations"][0].keys() == {"index", "quantity", "value"}
