"""Coefficient construction for the topography-adapted internal-wave model.

Every coefficient is a function of the bottom profile alone, so the pipeline
works on a 1-D "b-line" spanning [b_min, b_max] and samples onto the spatial
grid through b(x).  Stages (acyclic):

    base (lambda, f, g, nu + derivatives)
      -> second order (theta, alpha, theta1, alpha1, eta, eta1)
      -> s, t (x-space fields)
      -> omega2 (quadrature/ODE on the b-line)
      -> omega1 -> kappa1, kappa0
      -> (kappa2, eta2) -> varsigma
      -> appendix fields capA..capF (x-space composites)

PRIME CONVENTION.  Displayed primes (f', g', nu', omega2', ...) denote
d/d(beta*b) by default ("dbetab").  The alternative reading d/db with beta
held as a parameter ("db") is implemented behind the same switch purely for
arbitration runs; the expansion-order and derivation-residual suites degrade
measurably under it.

The (kappa2, eta2) pair enters the operator only through the combination
kappa2 + beta*b*eta2 (pointwise in x both multiply eps*zeta), so the split is
a gauge choice; it is fixed by eliminating kappa2 and solving the remaining
relation with beta treated as a parameter, which is exact and keeps eta2 = 0
when beta = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .grid import Field, PeriodicGrid, spectral_deriv
from .linear_ode import integrating_factor_solve
from .params import (ModelParams, ValidationReport, Violation,
                     check_bottom_admissibility)

CONVENTIONS = ("dbetab", "db")


class BottomSingularityError(RuntimeError):
    """b-range touches a singular set excluded by the bottom admissibility check."""


# ---------------------------------------------------------------------------
# bathymetry
# ---------------------------------------------------------------------------

@dataclass
class Bathymetry:
    b: Field
    bx: Field
    bxx: Field
    generator: dict = field(default_factory=dict)

    @property
    def grid(self) -> PeriodicGrid:
        return self.b.grid

    @property
    def b_min(self) -> float:
        return float(np.min(self.b.values))

    @property
    def b_max(self) -> float:
        return float(np.max(self.b.values))


def flat_bathymetry(grid: PeriodicGrid, level: float = 0.0) -> Bathymetry:
    z = np.zeros(grid.n)
    return Bathymetry(Field(grid, np.full(grid.n, float(level))),
                      Field(grid, z.copy()), Field(grid, z.copy()),
                      {"kind": "flat", "level": level})


def gaussian_bump_bathymetry(grid: PeriodicGrid, amplitude: float, width: float,
                             center: float | None = None, base: float = 0.0) -> Bathymetry:
    """base + amplitude * exp(-(x-center)^2 / width^2), derivatives analytic.

    Tails must decay within the cell; pick width << length.
    """
    x0 = grid.length / 2 if center is None else center
    x = grid.nodes
    u = (x - x0) / width
    b = base + amplitude * np.exp(-(u**2))
    bx = amplitude * np.exp(-(u**2)) * (-2 * u / width)
    bxx = amplitude * np.exp(-(u**2)) * (4 * u**2 - 2) / width**2
    return Bathymetry(Field(grid, b), Field(grid, bx), Field(grid, bxx),
                      {"kind": "gaussian_bump", "amplitude": amplitude,
                       "width": width, "center": x0, "base": base})


def cosine_bathymetry(grid: PeriodicGrid, amplitude: float, mode: int = 1,
                      phase: float = 0.0, base: float = 0.0) -> Bathymetry:
    k = 2 * np.pi * mode / grid.length
    x = grid.nodes
    b = base + amplitude * np.cos(k * x + phase)
    bx = -amplitude * k * np.sin(k * x + phase)
    bxx = -amplitude * k**2 * np.cos(k * x + phase)
    return Bathymetry(Field(grid, b), Field(grid, bx), Field(grid, bxx),
                      {"kind": "cosine", "amplitude": amplitude, "mode": mode,
                       "phase": phase, "base": base})


def bathymetry_from_values(grid: PeriodicGrid, values: np.ndarray,
                           generator: dict | None = None) -> Bathymetry:
    """Profile given on the nodes; derivatives taken spectrally."""
    b = Field(grid, np.asarray(values, dtype=float))
    return Bathymetry(b, Field(grid, spectral_deriv(b.values, grid, 1)),
                      Field(grid, spectral_deriv(b.values, grid, 2)),
                      generator or {"kind": "sampled"})


# ---------------------------------------------------------------------------
# base coefficient functions on the b-line
# ---------------------------------------------------------------------------

def eval_base(params: ModelParams, b: np.ndarray, convention: str = "dbetab") -> dict:
    """lambda, f, g, nu and their b-derivatives under the active convention."""
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown prime convention {convention!r}")
    g_, d = params.gamma, params.delta
    y = params.beta * np.asarray(b, dtype=float)
    P = g_ + d - g_ * d * y
    if P.size and np.min(np.abs(P)) < 1e-12:
        j = int(np.argmin(np.abs(P)))
        raise ZeroDivisionError(f"gamma+delta-gamma*delta*beta*b vanishes at index {j}")
    out = {"b": np.asarray(b, dtype=float)}
    out["f"] = d / P
    out["g"] = (1 - d * y) / P
    out["lam"] = (1 + g_ * d) / (3 * d * P)
    # primes w.r.t. beta*b; the "db" reading multiplies each order by beta
    s1 = 1.0 if convention == "dbetab" else params.beta
    out["fp"] = s1 * g_ * d**2 / P**2
    out["fpp"] = s1**2 * 2 * g_**2 * d**3 / P**3
    out["gp"] = s1 * (-(d**2) / P**2)
    out["gpp"] = s1**2 * (-2 * g_ * d**3 / P**3)
    out["nu"] = out["lam"] - params.inv_bo
    out["nup"] = s1 * g_ * (1 + g_ * d) / (3 * P**2)
    out["dd"] = 1 / d - y
    out["y"] = y
    return out


def eval_second_order(params: ModelParams, base: dict) -> dict:
    """theta, alpha, theta1, alpha1, eta, eta1 exactly as displayed."""
    g_ = params.gamma
    d = params.delta
    f, fp, fpp = base["f"], base["fp"], base["fpp"]
    g, gp, gpp = base["g"], base["gp"], base["gpp"]
    dd = base["dd"]
    out = {}
    out["theta"] = dd**2 * f / 3 - dd**2 * (1 - g_) * f**2 / 3 - g_ * f / 3 \
        - g_ * f * g * (1 - g_) / 3
    out["alpha"] = -dd**2 * fp / 3 + dd * f / 2 - g_ * fp / (3 * d) + g_ * f / 3
    # the unbalanced-parenthesis term is read as +((1/delta - beta b)/2)(1-gamma) f^2
    out["theta1"] = dd**2 * fp / 3 - dd**2 * (1 - g_) * 2 * f * fp / 3 - dd * f / 2 \
        + dd * (1 - g_) * f**2 / 2 + f / 2 - g_ * fp / 3 + 2 * g_ * gp / 3 \
        - 2 * dd * fp / 3
    out["alpha1"] = g_ * (1 - g_) * (g * fp + gp * f) / 3
    out["eta"] = -dd**2 * fpp / 3 + dd * fp - g_ * fpp / (3 * d) + 2 * g_ * fp / 3
    out["eta1"] = dd**2 * fpp / 3 - dd * fp + 2 * dd * (1 - g_) * fp * f \
        - dd**2 * (1 - g_) * 4 * fp**2 / 3 - dd**2 * (1 - g_) * 2 * f * fpp / 3 \
        + dd * fpp / 3 + 2 * fp - dd * fpp - g_ * fpp / 3 \
        - g_ * (1 - g_) * fpp * g / 3 - g_ * (1 - g_) * 2 * fp * gp / 3 \
        - g_ * (1 - g_) * f * gpp / 3 + 2 * g_ * gpp / 3 - fp
    return out


def _denominator(params: ModelParams, base: dict) -> np.ndarray:
    """nu - beta*b*(gamma/3 + 2/(3 delta)) f + (beta*b)^2 f/3; its zeros are the
    forbidden bottom values."""
    y, f = base["y"], base["f"]
    return base["nu"] - y * (params.gamma / 3 + 2 / (3 * params.delta)) * f \
        + y**2 * f / 3


def _e_combination(params: ModelParams, base: dict) -> np.ndarray:
    y, f = base["y"], base["f"]
    return (params.gamma / 3 + 2 / (3 * params.delta)) * f - y * f / 3


# ---------------------------------------------------------------------------
# the coefficient table
# ---------------------------------------------------------------------------

_CSV_FIELDS = [
    ("lambda", "lam"), ("f", "f"), ("g", "g"), ("fp", "fp"), ("gp", "gp"),
    ("fpp", "fpp"), ("gpp", "gpp"), ("nu", "nu"), ("nup", "nup"),
    ("theta", "theta"), ("alpha", "alpha"), ("theta1", "theta1"),
    ("alpha1", "alpha1"), ("eta", "eta"), ("eta1", "eta1"),
    ("s_field", "s_field"), ("t_field", "t_field"), ("kappa0", "kappa0"),
    ("kappa1", "kappa1"), ("omega1", "omega1"), ("omega2", "omega2"),
    ("kappa2", "kappa2"), ("eta2", "eta2"), ("varsigma", "varsigma"),
    ("capA", "capA"), ("capB", "capB"), ("capC", "capC"), ("capD", "capD"),
    ("capE", "capE"), ("capF", "capF0"),
]


@dataclass
class CoeffTable:
    """All coefficient fields sampled on the grid, plus the b-line data the
    residual checks differentiate."""

    grid: PeriodicGrid
    params: ModelParams
    prime_convention: str
    ode_reference_point: float
    ode_constant: float
    line: dict                  # b-line arrays incl. omega2, kappa2, ...
    fields: dict                # per-grid-point arrays
    quad_tol: float

    def __getattr__(self, name):
        fields = object.__getattribute__(self, "fields")
        if name in fields:
            return fields[name]
        raise AttributeError(name)

    # -- model-facing evaluations -------------------------------------------
    def q1(self, state, params: ModelParams | None = None) -> np.ndarray:
        p = params or self.params
        X = p.eps * state.zeta.values
        return 1.0 + self.fields["kappa1"] * X + self.fields["omega1"] * self.fields["y"]

    def q2(self, state, params: ModelParams | None = None) -> np.ndarray:
        p = params or self.params
        X = p.eps * state.zeta.values
        y = self.fields["y"]
        return 1.0 + (self.fields["kappa2"] + self.fields["eta2"] * y) * X \
            + self.fields["omega2"] * y

    def q1_effective(self, state, params: ModelParams | None = None) -> np.ndarray:
        """q1 + mu*eps*beta*kappa0 * dzeta/dx * db/dx (the zeroth-order symbol)."""
        p = params or self.params
        zx = spectral_deriv(state.zeta.values, self.grid, 1)
        return self.q1(state, p) + p.mu * p.eps * p.beta * self.fields["kappa0"] \
            * zx * self.fields["bx"]

    def capF(self, state, params: ModelParams | None = None) -> np.ndarray:
        p = params or self.params
        return self.q1(state, p) * self.fields["capF_q1_bracket"] \
            + state.zeta.values * self.fields["capF_zeta_bracket"]

    def q0(self, state, params: ModelParams | None = None) -> np.ndarray:
        """(gamma+delta) q1 - mu*capF."""
        p = params or self.params
        return (p.gamma + p.delta) * self.q1(state, p) - p.mu * self.capF(state, p)

    def symmetrizer_weight(self, state, params: ModelParams | None = None) -> np.ndarray:
        """Q0 + eps^2 Q1, the quantity whose positivity is H3."""
        p = params or self.params
        z, v = state.zeta.values, state.v.values
        h1 = 1 - p.eps * z
        h2 = 1 / p.delta + p.eps * z - p.beta * self.fields["b"]
        q1v = -p.gamma * self.q1(state, p) * (h1 + h2) ** 2 / (h1 + p.gamma * h2) ** 3 * v**2
        return self.q0(state, p) + p.eps**2 * q1v

    def sup(self, name: str) -> float:
        return float(np.max(np.abs(self.fields[name])))

    def csv_header(self) -> list[str]:
        return ["x"] + [h for h, _ in _CSV_FIELDS]

    def csv_rows(self):
        cols = [self.grid.nodes] + [self.fields[a] for _, a in _CSV_FIELDS]
        for i in range(self.grid.n):
            yield [c[i] for c in cols]


# ---------------------------------------------------------------------------
# stages on the b-line
# ---------------------------------------------------------------------------

def solve_omega2(params: ModelParams, line: dict, b_ref: float, constant: float,
                 quad_tol: float, convention: str) -> tuple[np.ndarray, np.ndarray]:
    """omega2 and its derivative on the b-line.

    Under "dbetab" the defining relation is d/dY[Y nu omega2] + source terms
    with Y = beta*b, which the substitution w = Y*nu*omega2 turns into
    w' + n w = p with bounded coefficients; "db" keeps the 1/(beta b) pole.
    The reference value is omega2(b_ref) = constant (the free constant of the
    general solution).
    """
    beta = params.beta
    bline = line["b"]
    scale = beta if convention == "dbetab" else 1.0  # dtau/db
    tau = scale * bline
    tau_ref = scale * b_ref

    def fields_at(tau_arr):
        b_arr = tau_arr / scale
        base = eval_base(params, b_arr, convention)
        sec = eval_second_order(params, base)
        return base, sec

    def n_fun(tau_arr):
        base, sec = fields_at(tau_arr)
        y, fp = base["y"], base["fp"]
        D = _denominator(params, base)
        if D.size and np.min(np.abs(D)) < 1e-10:
            raise BottomSingularityError("denominator vanishes on the b-range; "
                                         "bottom admissibility (H0) fails")
        core = (2 * sec["alpha"] + (2 * params.gamma / 3) * fp * y) / D
        if convention == "dbetab":
            return core
        return core + (1 - beta) / (beta * (np.asarray(tau_arr) / scale))

    def p_fun(tau_arr):
        base, sec = fields_at(tau_arr)
        y, fp, nu = base["y"], base["fp"], base["nu"]
        D = _denominator(params, base)
        return -base["nup"] - (2 * sec["alpha"] + (2 * params.gamma / 3) * fp * y) * nu / D

    w_ref = (beta * b_ref) * _ref_nu(params, b_ref, convention) * constant
    w = integrating_factor_solve(n_fun, p_fun, tau_ref, w_ref, tau, tol=quad_tol)
    y, nu, nup = line["y"], line["nu"], line["nup"]
    if np.any(np.abs(y * nu) < 1e-13):
        raise BottomSingularityError("beta*b*nu vanishes on the b-range (H0)")
    omega2 = w / (y * nu)
    # derivative from the relation itself, no numerical differentiation
    D = _denominator(params, line)
    core_n = (2 * line["alpha"] + (2 * params.gamma / 3) * line["fp"] * y) / D
    p_here = -nup - (2 * line["alpha"] + (2 * params.gamma / 3) * line["fp"] * y) * nu / D
    if convention == "dbetab":
        wp = p_here - core_n * w
        ynu_p = nu + y * nup
    else:
        wp = p_here - (core_n + (1 - beta) / (beta * line["b"])) * w
        ynu_p = beta * nu + y * nup
    omega2p = (wp - ynu_p * omega2) / (y * nu)
    return omega2, omega2p


def _ref_nu(params: ModelParams, b_ref: float, convention: str) -> float:
    return float(eval_base(params, np.array([b_ref]), convention)["nu"][0])


def eval_omega1_kappa1_kappa0(params: ModelParams, line: dict) -> None:
    """Fill omega1, kappa1, kappa0 in dependency order (in place)."""
    y = line["y"]
    D = _denominator(params, line)
    if np.min(np.abs(D)) < 1e-10:
        j = int(np.argmin(np.abs(D)))
        raise BottomSingularityError(
            f"coefficient denominator vanishes at b-line index {j} (value {D[j]:.3e})")
    E = _e_combination(params, line)
    line["omega1"] = (line["nu"] * line["omega2"] + E) / D
    one_w1 = 1.0 + y * line["omega1"]
    line["kappa1"] = (-2 * line["theta"] - (params.gamma - 1) / 3 * line["g"]) * one_w1 / D
    line["kappa0"] = one_w1 * (2 * line["theta1"] - 2 * line["alpha1"]
                               + line["dd"] * line["fp"] / 3
                               - params.gamma * line["gp"] / 3)
    line["D"] = D
    line["E"] = E


def solve_kappa2_eta2(params: ModelParams, line: dict, convention: str) -> None:
    """kappa2 and eta2 from the withdrawal system (in place).

    Eliminating kappa2 through nu*kappa2 + nu*(beta b)*eta2 = R and carrying
    the elimination through the differential relation with beta treated as a
    parameter leaves nu*(1-beta)*eta2 = RHS - dR/db, which is solved directly;
    kappa2 follows.  The operator only ever sees kappa2 + beta*b*eta2 = R/nu,
    so this split is a pure bookkeeping convention.
    """
    y = line["y"]
    one_w1 = 1.0 + y * line["omega1"]
    R = -(3 * line["theta"] + (params.gamma - 1) * line["g"]) * one_w1
    rhs2 = (-2 * line["theta1"] + line["alpha1"]) * one_w1 \
        - y * line["kappa1"] * (2 * params.gamma / 3) * line["fp"] \
        - 2 * line["alpha"] * line["kappa1"]
    line["R"] = R
    line["rhs_eta2"] = rhs2
    chi = R / line["nu"]
    if params.beta == 0.0 or len(line["b"]) < 8:
        line["eta2"] = np.zeros_like(R)
        line["kappa2"] = chi
        return
    if abs(1.0 - params.beta) < 1e-8:
        # the split degenerates at beta = 1; fall back to the gauge eta2 = 0
        line["eta2"] = np.zeros_like(R)
        line["kappa2"] = chi
        return
    dR_db = _line_derivative(line["b"], R)
    line["eta2"] = (rhs2 - dR_db) / (line["nu"] * (1.0 - params.beta))
    line["kappa2"] = chi - y * line["eta2"]


def eval_varsigma(params: ModelParams, line: dict) -> None:
    """varsigma from its defining division (in place)."""
    g_, d = params.gamma, params.delta
    y = line["y"]
    f, g, nu, lam = line["f"], line["g"], line["nu"], line["lam"]
    om1, om2 = line["omega1"], line["omega2"]
    one_w1 = 1.0 + y * om1
    h = f**2 - g_ * g**2
    num = ((1 - g_) / 3) * g**2 * one_w1 - params.inv_bo * h \
        + line["theta"] * g * one_w1 + nu * y * om2 * h \
        + one_w1 * y * (g_ / 3 + 2 / (3 * d)) * f * h \
        - one_w1 * y**2 * (f / 3) * h \
        - y * om1 * lam * h
    den = nu * (1.0 + y * om2)
    if np.min(np.abs(den)) < 1e-12:
        j = int(np.argmin(np.abs(den)))
        raise BottomSingularityError(f"nu (1 + beta b omega2) vanishes at index {j}")
    line["varsigma"] = num / den


# ---------------------------------------------------------------------------
# x-space stages
# ---------------------------------------------------------------------------

def eval_st(params: ModelParams, bathy: Bathymetry, gf: dict) -> None:
    """s and t fields; x-derivatives of f(b), g(b) by chain rule (in place)."""
    beta = params.beta
    g_ = params.gamma
    bx, bxx = bathy.bx.values, bathy.bxx.values
    dtaudx = (beta if gf["convention"] == "dbetab" else 1.0) * bx
    dtaudxx = (beta if gf["convention"] == "dbetab" else 1.0) * bxx
    f, fp, fpp = gf["f"], gf["fp"], gf["fpp"]
    g, gp, gpp = gf["g"], gf["gp"], gf["gpp"]
    dd = gf["dd"]
    fx = fp * dtaudx
    fxx = fpp * dtaudx**2 + fp * dtaudxx
    gx = gp * dtaudx
    gxx = gpp * dtaudx**2 + gp * dtaudxx
    gf["s_field"] = 0.5 * dd**2 * fx**2 - 2 * dd * fx * f * beta * bx \
        + dd**2 / 3 * f * fxx + beta**2 / 2 * bx**2 * f**2 \
        - beta / 2 * dd * bxx * f**2 - g_ / 3 * g * gxx - g_ / 2 * gx**2
    gf["t_field"] = 5 / 3 * dd**2 * f * fx - 2 * dd * f**2 * beta * bx \
        - 5 * g_ / 3 * g * gx


def eval_appendix_fields(params: ModelParams, bathy: Bathymetry, gf: dict) -> None:
    """capA..capE and the two capF brackets (in place).

    Composite x-derivatives (of f^2 - gamma g^2, varsigma, s, t, g) are taken
    spectrally; primed fields come from the b-line.
    """
    grid = bathy.grid
    dx = lambda u, o=1: spectral_deriv(u, grid, o)
    eps, beta, g_, d = params.eps, params.beta, params.gamma, params.delta
    inv_bo = params.inv_bo
    b, bx, bxx = gf["b"], bathy.bx.values, bathy.bxx.values
    f, fp, fpp, g, gp = gf["f"], gf["fp"], gf["fpp"], gf["g"], gf["gp"]
    lam, nu, nup = gf["lam"], gf["nu"], gf["nup"]
    theta, alpha, theta1, alpha1 = gf["theta"], gf["alpha"], gf["theta1"], gf["alpha1"]
    eta, eta1, dd = gf["eta"], gf["eta1"], gf["dd"]
    om1, om2, om2p = gf["omega1"], gf["omega2"], gf["omega2p"]
    varsig = gf["varsigma"]
    s_f, t_f = gf["s_field"], gf["t_field"]

    h = f**2 - g_ * g**2
    hx, hxx, hxxx = dx(h), dx(h, 2), dx(h, 3)
    gx, gxx = dx(g), dx(g, 2)
    vsx, vsxx = dx(varsig), dx(varsig, 2)
    w1b = 1.0 + beta * om1 * b
    w2b = 1.0 + beta * om2 * b
    dtaudx = (beta if gf["convention"] == "dbetab" else 1.0) * bx
    om2x = om2p * dtaudx
    kap0_brk = 2 * theta1 - 2 * alpha1 + dd * fp / 3 - g_ * gp / 3
    gpbx = beta * bx * gp
    ff = g_ / 3 * f + 2 / (3 * d) * f

    gf["capA"] = (
        2 * eps * beta * w2b * bx * nup * hx
        + 2 * eps * beta**2 * nu * bx * om2p * b * hx
        + 2 * eps * beta * om2 * nu * bx * hx
        + 3 * eps * beta * om2 * nu * b * hxx
        - 3 * eps * inv_bo * hxx
        - 3 * eps * beta * om1 * b * lam * hxx
        + eps * w1b * theta * (2 * beta * dx(bx * gp) + gxx)
        + eps * w1b * (2 * theta + (g_ - 1) * g) * dx(gpbx)
        + eps * beta * w1b * alpha * h * bxx
        + 4 * eps * beta * w1b * alpha * hx * bx
        + 3 * eps * beta * w1b * ff * hxx * b
        + eps * beta * w1b * (theta1 - alpha1) * g * bxx
        + eps * beta * w1b * (2 * theta1 - alpha1) * beta * bx**2 * gp
        + eps * beta * w1b * kap0_brk * (gpbx + gx) * bx
        + eps * beta**2 * w1b * eta * bx**2 * h
        + eps * beta**2 * w1b * (g_ / 3) * fp * b * bxx * h
        + 2 * eps * beta**2 * w1b * (2 * g_ / 3) * fp * b * bx * hx
        - eps * beta**2 * w1b * f * hxx
        + eps * beta**2 * w1b * eta1 * bx**2 * g
        + eps * beta**3 * w1b * (g_ / 3) * fpp * bx**2 * b * h
        - beta * bx * nup * w2b * eps * vsx
        - eps * nu * w2b * vsxx
        - nu * beta * (om2x * b + om2 * bx) * eps * vsx
        + eps * w1b * (2 * s_f + dx(t_f))
    )
    gf["capB"] = (
        eps * beta * bx * nup * w2b * h
        + eps * beta**2 * nu * bx * om2p * b * h
        + eps * beta * nu * om2 * bx * h
        + 3 * eps * beta * om2 * b * nu * hx
        - 3 * eps * inv_bo * hx
        - 3 * eps * beta * om1 * b * lam * hx
        + eps * w1b * (2 * theta + (g_ - 1) * g) * (gpbx + gx)
        + eps * beta * w1b * 2 * alpha * h * bx
        + 3 * eps * beta * w1b * ff * hx * b
        + eps * beta * w1b * (2 * theta1 - alpha1) * g * bx
        + eps * beta**2 * w1b * (2 * g_ / 3) * fp * b * bx * h
        - eps * beta**2 * w1b * f * b**2 * hx
        - eps * beta * w2b * bx * nup * varsig
        - 2 * eps * nu * w2b * vsx
        - eps * beta * nu * (om2x * b + om2 * bx) * varsig
        + eps * w1b * (0.5 * dx((1 - g_) * g**2) + t_f)
    )
    gf["capC"] = (
        eps * beta * bx * nup * w2b * h
        + eps * beta**2 * nu * bx * om2p * b * h
        + eps * beta * nu * om2 * bx * h
        + 3 * eps * beta * om2 * b * nu * hx
        - 3 * eps * inv_bo * hx
        - 3 * eps * beta * om1 * b * lam * hx
        + eps * w1b * theta * (gpbx + 2 * gx)
        + eps * w1b * (theta + (2 / 3) * (g_ - 1) * g) * gpbx
        + eps * beta * w1b * 2 * alpha * h * bx
        + 3 * eps * beta * w1b * ff * hx * b
        + eps * beta * w1b * kap0_brk * g * bx
        + eps * beta**2 * w1b * (2 * g_ / 3) * fp * b * bx * h
        - eps * beta**2 * w1b * f * b**2 * hx
        - eps * beta * bx * nup * w2b * varsig
        - 2 * eps * nu * w2b * vsx
        - eps * beta * nu * (om2x * b + om2 * bx) * varsig
        + eps * w1b * ((1 / 3) * dx((1 - g_) * g**2) + t_f)
    )
    gf["capD"] = (2 * eps / 3) * w1b * (g_ - 1) * g**2
    gf["capD_long"] = (
        1.5 * eps * nu * beta * om2 * b * h
        - 1.5 * eps * inv_bo * h
        - 1.5 * eps * beta * om1 * b * lam * h
        + 0.5 * eps * w1b * (2 * theta + (g_ - 1) * g) * g
        + 0.5 * eps * w1b * (theta + (2 / 3) * (g_ - 1) * g) * g
        + 1.5 * eps * beta * w1b * ff * h * b
        - 1.5 * eps * beta**2 * w1b * (f / 3) * b**2 * h
        - 1.5 * nu * eps * varsig * w2b
        + (2 * eps / 3) * (1 - g_) * g**2 * w1b
    )
    gf["capE"] = (
        0.5 * eps * beta * bx * nup * w2b * hxx
        + 0.5 * eps * beta**2 * nu * bx * om2p * b * hxx
        + 0.5 * eps * nu * beta * om2 * bx * hxx
        + 0.5 * eps * nu * beta * om2 * b * hxxx
        - 0.5 * eps * inv_bo * hxxx
        - 0.5 * eps * beta * om1 * b * lam * hxxx
        + eps * beta * w1b * theta * dx(bx * gp, 2)
        + 0.5 * eps * beta * w1b * alpha * hx * bxx
        + 0.5 * eps * beta * w1b * 2 * alpha * hxx * bx
        + 0.5 * eps * beta * w1b * ff * hxxx * b
        + eps * beta**2 * w1b * (theta1 - alpha1) * bx * gp * bxx
        + eps * beta * w1b * kap0_brk * dx(gpbx) * bx
        + 0.5 * eps * beta**2 * w1b * eta * bx**2 * hx
        + 0.5 * eps * beta**2 * w1b * (g_ / 3) * fp * b * bxx * hx
        + 0.5 * eps * beta**2 * w1b * (2 * g_ / 3) * fp * b * bx * hxx
        - 0.5 * eps * beta**2 * w1b * (f / 3) * b**2 * hxxx
        + eps * beta**2 * w1b * eta1 * bx**2 * beta * bx * gp
        + 0.5 * eps * beta**3 * w1b * (g_ / 3) * fpp * bx**2 * b * hx
        + eps * w1b * dx(s_f)
    )
    gd = g_ + d
    gf["capF_q1_bracket"] = (
        beta * alpha * gd * bxx
        + beta**2 * eta * gd * bx**2
        + beta**2 * (g_ / 3) * fp * gd * b * bxx
        + beta**3 * (g_ / 3) * fpp * gd * b * bx**2
    )
    gf["capF_zeta_bracket"] = (
        eps * beta * w1b * gd * (theta1 - alpha1) * bxx
        + eps * beta**2 * w1b * gd * eta1 * bx**2
    )
    gf["capF0"] = (1.0 + om1 * gf["y"]) * gf["capF_q1_bracket"]


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

_LINE_FIELDS = ["b", "y", "f", "fp", "fpp", "g", "gp", "gpp", "lam", "nu", "nup",
                "dd", "theta", "alpha", "theta1", "alpha1", "eta", "eta1",
                "omega2", "omega2p", "omega1", "kappa1", "kappa0", "kappa2",
                "eta2", "varsigma", "R", "rhs_eta2", "D", "E"]


def build_coeff_table(params: ModelParams, bathy: Bathymetry, *,
                      convention: str = "dbetab", bline_n: int = 513,
                      quad_tol: float = 1e-12, ode_constant: float = 0.0,
                      b_ref: float | None = None,
                      h0_exclusion_radius: float = 1e-6,
                      check_h0: bool = True) -> CoeffTable:
    """Run the full pipeline and sample every field onto the grid."""
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown prime convention {convention!r}")
    bmin, bmax = bathy.b_min, bathy.b_max
    constant_profile = (bmax - bmin) < 1e-12 * max(1.0, abs(bmax), abs(bmin))
    topographic = params.beta != 0.0 and not constant_profile

    if params.beta != 0.0 and check_h0:
        rep = check_bottom_admissibility(params, bathy.b.values, h0_exclusion_radius)
        if rep.applicable and not rep.passed:
            raise BottomSingularityError(
                "bottom admissibility (H0) fails: "
                + "; ".join(f"{v.quantity}={v.value:.3g}" for v in rep.violations[:4]))
        # the b-line solve needs the whole reachable interval clear, not just
        # the sampled nodes
        ylo, yhi = sorted((params.beta * bmin, params.beta * bmax))
        from .params import bottom_forbidden_roots
        for bad in [0.0] + bottom_forbidden_roots(params):
            if ylo - h0_exclusion_radius <= bad <= yhi + h0_exclusion_radius:
                raise BottomSingularityError(
                    f"H0: the reachable interval beta*b in [{ylo:.4g}, {yhi:.4g}] "
                    f"crosses the excluded value {bad:.6g}")

    if constant_profile or params.beta == 0.0:
        bline = np.array([0.5 * (bmin + bmax)])
    else:
        bline = np.linspace(bmin, bmax, bline_n)

    line = eval_base(params, bline, convention)
    line.update(eval_second_order(params, line))
    line["convention"] = convention

    if b_ref is None:
        # the stated default: the endpoint of [b_min, b_max] farthest from 0
        b_ref = bmax if abs(bmax) >= abs(bmin) else bmin

    if topographic:
        line["omega2"], line["omega2p"] = solve_omega2(
            params, line, b_ref, ode_constant, quad_tol, convention)
    else:
        line["omega2"] = np.zeros_like(bline)
        line["omega2p"] = np.zeros_like(bline)
        if params.beta != 0.0:
            # constant profile: omega2(b0) = C = ode_constant, slope off the
            # defining relation
            y0, nu0, nup0 = line["y"], line["nu"], line["nup"]
            line["omega2"] = np.full_like(bline, ode_constant)
            rhs0 = _omega2_rhs(params, line)
            line["omega2p"] = (rhs0 - (nu0 + y0 * nup0) * line["omega2"]) / (y0 * nu0)

    eval_omega1_kappa1_kappa0(params, line)
    solve_kappa2_eta2(params, line, convention)
    eval_varsigma(params, line)

    # sample the line onto the grid
    gf = {}
    if len(bline) == 1:
        for k in _LINE_FIELDS:
            gf[k] = np.full(bathy.grid.n, float(np.asarray(line[k]).ravel()[0]))
    else:
        bvals = bathy.b.values
        for k in _LINE_FIELDS:
            gf[k] = CubicSpline(bline, line[k])(bvals)
    gf["convention"] = convention
    gf["bx"] = bathy.bx.values
    gf["bxx"] = bathy.bxx.values

    eval_st(params, bathy, gf)
    eval_appendix_fields(params, bathy, gf)

    return CoeffTable(grid=bathy.grid, params=params, prime_convention=convention,
                      ode_reference_point=float(b_ref), ode_constant=float(ode_constant),
                      line=line, fields=gf, quad_tol=quad_tol)


def _line_derivative(b: np.ndarray, u: np.ndarray) -> np.ndarray:
    """d/db of a smooth field sampled on the b-line (quintic spline)."""
    from scipy.interpolate import make_interp_spline

    k = 5 if len(b) > 8 else 3
    return make_interp_spline(b, u, k=k).derivative()(b)


def _omega2_rhs(params: ModelParams, line: dict) -> np.ndarray:
    """Right side of the omega2 relation, with omega1 eliminated:
    -nu' - (2 alpha + (2 gamma/3) f' beta b) * nu (1 + beta b omega2)/D."""
    y = line["y"]
    D = _denominator(params, line)
    core = 2 * line["alpha"] + (2 * params.gamma / 3) * line["fp"] * y
    return -line["nup"] - core * line["nu"] * (1.0 + y * line["omega2"]) / D


# ---------------------------------------------------------------------------
# residual report
# ---------------------------------------------------------------------------

def residual_report(table: CoeffTable, tol: float = 1e-8) -> dict:
    """Back-substitute every computed coefficient into its defining relation.

    Sup-norm residuals, relative to max(1, field scale).  The omega2/eta2
    relations are skipped (not applicable) when beta = 0, where no b-line
    solve happens.
    """
    p = table.params
    line = table.line
    y = line["y"]
    beta = p.beta
    scale = beta if table.prime_convention == "dbetab" else 1.0
    topographic = beta != 0.0 and len(line["b"]) > 1
    res: dict[str, float | None] = {}

    def rel(r, ref):
        return float(np.max(np.abs(r)) / max(1.0, float(np.max(np.abs(ref)))))

    one_w1 = 1.0 + y * line["omega1"]

    if topographic:
        omega2_lhs = (line["nu"] + y * line["nup"]) * line["omega2"] \
            + y * line["nu"] * line["omega2p"]
        rhs = -line["nup"] - y * line["omega1"] * 2 * line["alpha"] \
            - y**2 * line["omega1"] * (2 * p.gamma / 3) * line["fp"] \
            - 2 * line["alpha"] - (2 * p.gamma / 3) * line["fp"] * y
        res["omega2"] = rel(omega2_lhs - rhs, rhs)
    else:
        res["omega2"] = None

    om1_lhs = line["omega1"] * line["D"]
    om1_rhs = line["nu"] * line["omega2"] + line["E"]
    res["omega1"] = rel(om1_lhs - om1_rhs, om1_rhs)

    k1_lhs = line["kappa1"] * line["D"]
    k1_rhs = (-2 * line["theta"] - (p.gamma - 1) / 3 * line["g"]) * one_w1
    res["kappa1"] = rel(k1_lhs - k1_rhs, k1_rhs)

    k0_rhs = one_w1 * (2 * line["theta1"] - 2 * line["alpha1"]
                       + line["dd"] * line["fp"] / 3 - p.gamma * line["gp"] / 3)
    res["kappa0"] = rel(line["kappa0"] - k0_rhs, k0_rhs)

    k2_lhs = line["nu"] * line["kappa2"] + line["nu"] * y * line["eta2"]
    res["kappa2"] = rel(k2_lhs - line["R"], line["R"])

    if topographic and abs(1.0 - beta) >= 1e-8:
        bl = line["b"]
        d_db = lambda u: _line_derivative(bl, u)
        nup_b = scale * line["nup"]
        eta2_lhs = nup_b * line["kappa2"] + line["nu"] * d_db(line["kappa2"]) \
            + (line["nu"] + nup_b * y) * line["eta2"] \
            + line["nu"] * y * d_db(line["eta2"])
        res["eta2"] = rel(eta2_lhs - line["rhs_eta2"], line["rhs_eta2"])
    else:
        res["eta2"] = None

    vs_lhs = line["nu"] * (1.0 + y * line["omega2"]) * line["varsigma"]
    h = line["f"]**2 - p.gamma * line["g"]**2
    vs_rhs = ((1 - p.gamma) / 3) * line["g"]**2 * one_w1 - p.inv_bo * h \
        + line["theta"] * line["g"] * one_w1 + line["nu"] * y * line["omega2"] * h \
        + one_w1 * y * (p.gamma / 3 + 2 / (3 * p.delta)) * line["f"] * h \
        - one_w1 * y**2 * (line["f"] / 3) * h \
        - y * line["omega1"] * line["lam"] * h
    res["varsigma"] = rel(vs_lhs - vs_rhs, vs_rhs)

    checked = {k: v for k, v in res.items() if v is not None}
    worst = max(checked.values()) if checked else 0.0
    passed = worst < tol
    return {
        "passed": bool(passed),
        "tolerance": tol,
        "worst": worst,
        "residuals": res,
        "prime_convention": table.prime_convention,
        "ode_reference_point": table.ode_reference_point,
        "ode_constant": table.ode_constant,
    }
