"""Method-of-lines integrator for the adapted internal-wave model.

State is the pair (zeta, v) on the periodic grid.  The elliptic operator is
assembled and solved once per Runge-Kutta stage; all displayed derivatives are
spectral.  Also
hosts the energy diagnostics and the consistency harness that measures the
residual of the parent-system momentum balance along the model's own flow.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import operator_t
from .coeffs import Bathymetry, CoeffTable, build_coeff_table
from .gn_ref import OrderReport, eval_Qbar, eval_Rbar
from .grid import (Field, PeriodicGrid, dealias as dealias_field, quad_inner,
                   spectral_deriv, bessel_multiplier, xs_norm_arrays)
from .params import (ModelParams, check_depth, check_ellipticity,
                     check_symmetrizer_positivity)


class DepthError(ValueError):
    """Layer depth reached zero (H1 violated)."""


class SimulationBlowup(RuntimeError):
    """Integration aborted; carries the last valid snapshot and diagnostics."""

    def __init__(self, message, last_state=None, diagnostics=None, reports=None):
        super().__init__(message)
        self.last_state = last_state
        self.diagnostics = diagnostics or []
        self.reports = reports or []


@dataclass
class State:
    zeta: Field
    v: Field
    t: float = 0.0

    @property
    def grid(self) -> PeriodicGrid:
        return self.zeta.grid

    def copy(self) -> "State":
        return State(self.zeta.copy(), self.v.copy(), self.t)


def make_state(grid: PeriodicGrid, zeta: np.ndarray, v: np.ndarray, t: float = 0.0) -> State:
    return State(Field(grid, np.array(zeta, dtype=float)),
                 Field(grid, np.array(v, dtype=float)), t)


@dataclass
class SimConfig:
    t_end: float
    cfl: float = 0.4
    snapshot_stride: int = 10
    s_energy: float = 2.0
    dealias: bool = True
    hypothesis_check_stride: int = 10
    h01: float = 0.05
    h02: float = 0.05
    h03: float = 0.05

    def __post_init__(self):
        if not (0 < self.cfl <= 1):
            raise ValueError("cfl must lie in (0, 1]")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")


def flux_functions(state: State, bathy: Bathymetry, params: ModelParams):
    """Pointwise H, H' and G of the mass flux; aborts if a layer dries out."""
    z = state.zeta.values
    h1 = 1.0 - params.eps * z
    h2 = 1.0 / params.delta + params.eps * z - params.beta * bathy.b.values
    if np.min(np.real(h1)) <= 0 or np.min(np.real(h2)) <= 0:
        raise DepthError("nonpositive layer depth (H1 fails)")
    denom = h1 + params.gamma * h2
    H = h1 * h2 / denom
    Hp = (h1**2 - params.gamma * h2**2) / denom**2
    G = (h1 / denom) ** 2
    return H, Hp, G


def rhs(state: State, bathy: Bathymetry, coeffs: CoeffTable, params: ModelParams,
        t_op_cache: operator_t.TOperatorCache | None = None,
        dealias: bool = False):
    """Tendencies (dzeta/dt, dv/dt) as arrays.

    The second equation is solved through the elliptic operator:
    T(dv/dt + eps varsigma v v_x) = forcing, with the operator reassembled
    whenever zeta changed since the cached assembly.
    """
    grid = state.grid
    dx = lambda u, o=1: spectral_deriv(u, grid, o)
    eps, beta, mu = params.eps, params.beta, params.mu
    z, v = state.zeta.values, state.v.values
    H, Hp, G = flux_functions(state, bathy, params)
    bx = bathy.bx.values
    zx = dx(z)
    vx, vxx = dx(v), dx(v, 2)

    dzeta = -H * vx - eps * zx * Hp * v + beta * bx * G * v

    q1 = coeffs.q1(state, params)
    h1 = 1.0 - eps * z
    h2 = 1.0 / params.delta + eps * z - beta * coeffs.b
    # closed display for d/dx (H'/2): avoids differentiating the rational form
    d_hp_half = (-params.gamma * eps * zx * (h1 + h2) ** 2
                 + params.gamma * beta * bx * h1 * (h1 + h2)) \
        / (h1 + params.gamma * h2) ** 3
    varsig = coeffs.varsigma

    forcing = (
        -(params.gamma + params.delta) * q1 * zx
        - eps * q1 * (Hp - varsig) * v * vx
        - eps * q1 * d_hp_half * v**2
        + mu * (coeffs.capA * v * vx + coeffs.capB * vx**2 + coeffs.capC * v * vxx
                + coeffs.capD * dx(vx**2) + coeffs.capE * v**2
                + coeffs.capF(state, params) * zx)
    )
    op = (t_op_cache.get(state, coeffs, params) if t_op_cache is not None
          else operator_t.assemble(state, coeffs, params))
    dv = -(eps / 2.0) * varsig * dx(v**2) + operator_t.solve(op, forcing)

    if dealias:
        dzeta = dealias_field(dzeta, grid)
        dv = dealias_field(dv, grid)
    return dzeta, dv


def step_rk4(state: State, dt: float, bathy: Bathymetry, coeffs: CoeffTable,
             params: ModelParams, t_op_cache=None, dealias: bool = False) -> State:
    """Classical four-stage update; one operator assembly+solve per stage."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    grid = state.grid
    z0, v0 = state.zeta.values, state.v.values

    def stage(z, v, label):
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(v))):
            raise SimulationBlowup(f"non-finite state entering RK4 stage {label}",
                                   last_state=state)
        return rhs(State(Field(grid, z), Field(grid, v), state.t), bathy, coeffs,
                   params, t_op_cache, dealias)

    k1z, k1v = stage(z0, v0, 1)
    k2z, k2v = stage(z0 + 0.5 * dt * k1z, v0 + 0.5 * dt * k1v, 2)
    k3z, k3v = stage(z0 + 0.5 * dt * k2z, v0 + 0.5 * dt * k2v, 3)
    k4z, k4v = stage(z0 + dt * k3z, v0 + dt * k3v, 4)
    zn = z0 + dt / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z)
    vn = v0 + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    if not (np.all(np.isfinite(zn)) and np.all(np.isfinite(vn))):
        raise SimulationBlowup("non-finite state after RK4 update", last_state=state)
    return State(Field(grid, zn), Field(grid, vn), state.t + dt)


def cfl_dt(state: State, bathy: Bathymetry, params: ModelParams, cfl: float = 0.4) -> float:
    """Advective step bound; the dispersive part is damped by the operator solve."""
    H, Hp, _ = flux_functions(state, bathy, params)
    c_max = math.sqrt((params.gamma + params.delta) * float(np.max(H))) \
        + params.eps * float(np.max(np.abs(Hp * state.v.values)))
    return cfl * state.grid.dx / c_max


def mass(state: State) -> float:
    return float(state.grid.dx * np.sum(state.zeta.values))


def energy_Es(state: State, ref_state: State, coeffs: CoeffTable,
              params: ModelParams, s: float = 0.0) -> float:
    """Quadratic symmetrizer energy with coefficients frozen at ref_state.

    E^2 = (L^s zeta, [(Q0+eps^2 Q1)/H] L^s zeta) + (L^s v, T L^s v), with the
    operator term evaluated as the symmetric bilinear form.
    """
    grid = state.grid
    weight = coeffs.symmetrizer_weight(ref_state, params)
    if np.min(weight) <= 0:
        warnings.warn("symmetrizer weight nonpositive (H3 fails); the energy "
                      "may not control the X^s norm", RuntimeWarning, stacklevel=2)
    h1 = 1.0 - params.eps * ref_state.zeta.values
    h2 = 1.0 / params.delta + params.eps * ref_state.zeta.values - params.beta * coeffs.b
    Href = h1 * h2 / (h1 + params.gamma * h2)
    lz = bessel_multiplier(state.zeta.values, grid, s)
    lv = bessel_multiplier(state.v.values, grid, s)
    e2 = quad_inner(weight / Href * lz, lz, grid) \
        + operator_t.bilinear(lv, lv, ref_state, coeffs, params)
    return float(np.sqrt(max(e2, 0.0)))


def xs_norm_state(state: State, s: float, mu: float) -> float:
    return xs_norm_arrays(state.zeta.values, state.v.values, state.grid, s, mu)


def energy_equivalence_constant(ref_state: State, coeffs: CoeffTable,
                                params: ModelParams) -> float:
    """c0 with E^s/c0 <= |U|_{X^s} <= c0 E^s, computed from the attained
    H1-H3 floors and coefficient sups at the reference state."""
    weight = coeffs.symmetrizer_weight(ref_state, params)
    h1 = 1.0 - params.eps * ref_state.zeta.values
    h2 = 1.0 / params.delta + params.eps * ref_state.zeta.values - params.beta * coeffs.b
    Href = h1 * h2 / (h1 + params.gamma * h2)
    q1eff = coeffs.q1_effective(ref_state, params)
    q2 = coeffs.q2(ref_state, params)
    wq = weight / Href
    lo = min(float(np.min(wq)), float(np.min(q1eff)), float(np.min(coeffs.nu * q2)))
    hi = max(float(np.max(wq)), float(np.max(q1eff)), float(np.max(coeffs.nu * q2)))
    if lo <= 0:
        raise ValueError("equivalence fails: a floor is nonpositive (check H1-H3)")
    return max(math.sqrt(hi), 1.0 / math.sqrt(lo))


@dataclass
class SimResult:
    snapshots: list
    diagnostics: list
    dt: float
    aborted: bool = False
    abort_reason: str = ""


def _floors_row(state: State, bathy: Bathymetry, coeffs: CoeffTable,
                params: ModelParams) -> dict:
    z = state.zeta.values
    h1 = 1.0 - params.eps * z
    h2 = 1.0 / params.delta + params.eps * z - params.beta * bathy.b.values
    return {
        "h1_floor": float(np.min(h1)),
        "h2_floor": float(np.min(h2)),
        "q1_floor": float(np.min(coeffs.q1_effective(state, params))),
        "q2_floor": float(np.min(coeffs.q2(state, params))),
        "Q_floor": float(np.min(coeffs.symmetrizer_weight(state, params))),
    }


def simulate(initial: State, bathy: Bathymetry, coeffs: CoeffTable,
             params: ModelParams, config: SimConfig) -> SimResult:
    """Integrate to t_end, logging mass, energies and hypothesis floors.

    Aborts with a structured error (last valid snapshot attached) when any of
    the validity conditions fails mid-run.
    """
    reports = [
        check_depth(initial, bathy, params, config.h01),
        check_ellipticity(initial, bathy, coeffs, params, config.h02),
        check_symmetrizer_positivity(initial, coeffs, params, config.h03),
    ]
    failed = [r for r in reports if not r.passed]
    if failed:
        raise SimulationBlowup(
            "initial state violates " + ", ".join(r.check for r in failed),
            last_state=initial, reports=reports)

    base_dt = cfl_dt(initial, bathy, params, config.cfl)
    n_steps = max(1, math.ceil(config.t_end / base_dt))
    dt = config.t_end / n_steps

    cache = operator_t.TOperatorCache()
    ref = initial.copy()
    state = initial.copy()
    snapshots = [state.copy()]
    diagnostics = []

    def log_row(st):
        row = {"t": st.t, "mass": mass(st),
               "Es": energy_Es(st, ref, coeffs, params, config.s_energy),
               "Xs": xs_norm_state(st, config.s_energy, params.mu)}
        row.update(_floors_row(st, bathy, coeffs, params))
        diagnostics.append(row)

    log_row(state)
    for step in range(1, n_steps + 1):
        try:
            state = step_rk4(state, dt, bathy, coeffs, params, cache, config.dealias)
        except SimulationBlowup as exc:
            exc.diagnostics = diagnostics
            exc.last_state = snapshots[-1]
            raise
        if step % config.hypothesis_check_stride == 0 or step == n_steps:
            checks = [
                check_depth(state, bathy, params, config.h01),
                check_ellipticity(state, bathy, coeffs, params, config.h02),
                check_symmetrizer_positivity(state, coeffs, params, config.h03),
            ]
            bad = [c for c in checks if not c.passed]
            if bad:
                raise SimulationBlowup(
                    f"validity lost at t={state.t:.6g}: "
                    + ", ".join(c.check for c in bad),
                    last_state=snapshots[-1], diagnostics=diagnostics, reports=checks)
        if step % config.snapshot_stride == 0 or step == n_steps:
            snapshots.append(state.copy())
            log_row(state)
    return SimResult(snapshots, diagnostics, dt)


# ---------------------------------------------------------------------------
# linear dispersion and consistency probes
# ---------------------------------------------------------------------------

def predicted_mode_frequency(params: ModelParams, k: float) -> float:
    """omega(k) of the flat-bottom linearization:
    omega^2 = (gamma+delta) H(0) k^2 / (1 + mu nu k^2)."""
    gd = params.gamma + params.delta
    H0 = 1.0 / gd
    lam = (1 + params.gamma * params.delta) / (3 * params.delta * gd)
    nu = lam - params.inv_bo
    return math.sqrt(gd * H0 * k**2 / (1.0 + params.mu * nu * k**2))


def eqcons_residual(state: State, bathy: Bathymetry, coeffs: CoeffTable,
                    params: ModelParams, hstep: float = 1e-6) -> float:
    """Sup-norm residual of the parent momentum balance along the model flow.

    The time derivative of the dispersive term is taken by complex-step
    differentiation through the exact layer operators; the elliptic term uses
    the same discrete assembly as the solve inside the tendency, so its
    inversion error cancels instead of polluting the measurement.
    """
    grid = state.grid
    dx = lambda u, o=1: spectral_deriv(u, grid, o)
    eps, mu = params.eps, params.mu
    z, v = state.zeta.values, state.v.values
    dz, dv = rhs(state, bathy, coeffs, params, dealias=False)

    zc = Field(grid, z + 1j * hstep * dz)
    vc = Field(grid, v + 1j * hstep * dv)
    d_qbar_dt = np.imag(eval_Qbar(State(zc, vc, state.t), bathy, params)) / hstep

    q1 = coeffs.q1(state, params)
    op = operator_t.assemble(state, coeffs, params)
    vx = dx(v)
    varsig = coeffs.varsigma
    lhs = operator_t.apply(op, dv + eps * varsig * v * vx) \
        - q1 * (dv + mu * d_qbar_dt) \
        + q1 * mu * (params.gamma + params.delta) * params.inv_bo * dx(z, 3) \
        + mu * eps * q1 * dx(eval_Rbar(state, bathy, params))
    rhs_side = q1 * (eps * varsig * v * vx) \
        + mu * (coeffs.capA * v * vx + coeffs.capB * vx**2 + coeffs.capC * v * dx(v, 2)
                + coeffs.capD * dx(vx**2) + coeffs.capE * v**2
                + coeffs.capF(state, params) * dx(z))
    return float(np.max(np.abs(lhs - rhs_side)))


def derivation_order(state: State, bathy: Bathymetry, params: ModelParams,
                     mu_sequence=(0.05, 0.025, 0.0125, 0.00625, 0.003125),
                     convention: str = "dbetab", **table_opts) -> OrderReport:
    """Residual order in mu with the amplitude slaved to eps = M sqrt(mu).

    This is the end-to-end check of the coefficient pipeline: any wrong
    coefficient, appendix field or prime convention shows up as a depressed
    slope (claim: order 2).
    """
    mus = list(mu_sequence)
    errs = []
    for mu in mus:
        p = replace(params, mu=mu, eps=min(params.M * math.sqrt(mu), 1.0))
        table = build_coeff_table(p, bathy, convention=convention, **table_opts)
        errs.append(eqcons_residual(state, bathy, table, p))
    rep = OrderReport(f"derivation_residual[{convention}]", mus, errs, threshold=1.8)
    return rep
