"""Reference two-layer Green-Naghdi operators and their medium-amplitude
expansions, plus the measurement harness that fits observed expansion orders.

These evaluations are the derivation oracle for the coefficient pipeline: the
exact operators are compared against their displayed expansions over a
geometric sequence of interface amplitudes, and the fitted log-log slope must
match the claimed remainder order.  All derivatives are spectral and the
routines accept complex-valued states (used by the time-derivative probes of
the consistency harness).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coeffs import Bathymetry, CoeffTable
from .grid import Field, spectral_deriv
from .params import ModelParams


@dataclass
class LayerFields:
    """Depths and weighted velocities entering the layer operators."""

    h1: np.ndarray
    h2: np.ndarray
    w: np.ndarray       # h1 v / (h1 + gamma h2)
    wbar: np.ndarray    # -h2 v / (h1 + gamma h2)


def layer_fields(state, bathy: Bathymetry, params: ModelParams) -> LayerFields:
    z = state.zeta.values
    v = state.v.values
    h1 = 1.0 - params.eps * z
    h2 = 1.0 / params.delta + params.eps * z - params.beta * bathy.b.values
    if np.min(np.real(h1)) <= 0 or np.min(np.real(h2)) <= 0:
        raise ValueError("layer depth vanished (H1 fails); operators undefined")
    denom = h1 + params.gamma * h2
    return LayerFields(h1, h2, h1 * v / denom, -h2 * v / denom)


def apply_calT(h: np.ndarray, bprof: np.ndarray, v: np.ndarray, grid) -> np.ndarray:
    """-1/(3h) d(h^3 dV) + 1/(2h)[d(h^2 b_x V) - h^2 b_x dV] + b_x^2 V.

    `bprof` is the (scaled) bottom profile whose x-derivative enters; pass
    beta*b for the lower layer and zeros for the upper one.
    """
    dx = lambda u, o=1: spectral_deriv(u, grid, o)
    bpx = dx(bprof)
    return (-1.0 / (3.0 * h)) * dx(h**3 * dx(v)) \
        + (1.0 / (2.0 * h)) * (dx(h**2 * bpx * v) - h**2 * bpx * dx(v)) \
        + bpx**2 * v


def eval_Qbar(state, bathy: Bathymetry, params: ModelParams) -> np.ndarray:
    """Compact composition of the two layer operators."""
    grid = state.zeta.grid
    lf = layer_fields(state, bathy, params)
    zeros = np.zeros(grid.n)
    return apply_calT(lf.h2, params.beta * bathy.b.values, lf.w, grid) \
        - params.gamma * apply_calT(lf.h1, zeros, lf.wbar, grid)


def eval_Qbar_expanded(state, bathy: Bathymetry, params: ModelParams) -> np.ndarray:
    """The written-out form of the same operator; the two must agree."""
    grid = state.zeta.grid
    dx = lambda u, o=1: spectral_deriv(u, grid, o)
    lf = layer_fields(state, bathy, params)
    h1, h2, w = lf.h1, lf.h2, lf.w
    beta = params.beta
    bx = bathy.bx.values
    denom = h1 + params.gamma * h2
    return -1.0 / (3.0 * h2) * dx(h2**3 * dx(w)) \
        + beta / (2.0 * h2) * (dx(h2**2 * bx * w) - h2**2 * bx * dx(w)) \
        + beta**2 * bx**2 * w \
        - params.gamma / (3.0 * h1) * dx(h1**3 * dx(h2 * state.v.values / denom))


def eval_Rbar(state, bathy: Bathymetry, params: ModelParams) -> np.ndarray:
    """Quadratic velocity functional of the momentum equation."""
    grid = state.zeta.grid
    dx = lambda u, o=1: spectral_deriv(u, grid, o)
    lf = layer_fields(state, bathy, params)
    w, wbar = lf.w, lf.wbar
    beta = params.beta
    bx = bathy.bx.values
    zeros = np.zeros(grid.n)
    return 0.5 * (-lf.h2 * dx(w) + beta * bx * w) ** 2 \
        - 0.5 * params.gamma * (lf.h1 * dx(wbar)) ** 2 \
        - w * apply_calT(lf.h2, beta * bathy.b.values, w, grid) \
        + params.gamma * wbar * apply_calT(lf.h1, zeros, wbar, grid)


def eval_Q_expansion(state, bathy: Bathymetry, coeffs: CoeffTable,
                     params: ModelParams) -> np.ndarray:
    """Every displayed group of the expansion of Qbar (remainder O(eps^2))."""
    grid = state.zeta.grid
    dx = lambda u, o=1: spectral_deriv(u, grid, o)
    eps, beta, g_ = params.eps, params.beta, params.gamma
    z, v = state.zeta.values, state.v.values
    b, bx, bxx = coeffs.b, bathy.bx.values, bathy.bxx.values
    zx, zxx = dx(z), dx(z, 2)
    vx, vxx = dx(v), dx(v, 2)
    f, fp, fpp, g = coeffs.f, coeffs.fp, coeffs.fpp, coeffs.g
    th, al = coeffs.theta, coeffs.alpha
    th1, al1 = coeffs.theta1, coeffs.alpha1
    et, et1, dd = coeffs.eta, coeffs.eta1, coeffs.dd
    gp = coeffs.gp

    out = -coeffs.lam * vxx
    out = out + eps * (th * v * zxx + (2 * th + (g_ - 1) * g) * zx * vx
                       + (th + (2 / 3) * (g_ - 1) * g) * z * vxx)
    out = out + beta * (al * v * bxx + 2 * al * bx * vx
                        + (g_ / 3 + 2 / (3 * params.delta)) * f * b * vxx)
    out = out + eps * beta * ((th1 - al1) * z * v * bxx + (2 * th1 - al1) * z * bx * vx)
    out = out + eps * beta * ((2 * th1 - 2 * al1 + dd * fp / 3 - g_ * gp / 3)
                              * zx * bx * v)
    out = out + beta**2 * (et * bx**2 * v + (2 * g_ / 3) * fp * b * bx * vx
                           + (g_ / 3) * fp * b * bxx * v - f * b**2 * vxx / 3)
    out = out + eps * beta**2 * (et1 * bx**2 * z * v)
    out = out + beta**3 * ((g_ / 3) * fpp * bx**2 * b * v)
    return out


def eval_R_expansion(state, bathy: Bathymetry, coeffs: CoeffTable,
                     params: ModelParams) -> np.ndarray:
    """(1-gamma) g^2 ((v_x)^2/2 + v v_xx / 3) + s v^2 + t v v_x, O(eps)."""
    grid = state.zeta.grid
    dx = lambda u, o=1: spectral_deriv(u, grid, o)
    v = state.v.values
    vx, vxx = dx(v), dx(v, 2)
    return (1 - params.gamma) * coeffs.g**2 * (0.5 * vx**2 + v * vxx / 3.0) \
        + coeffs.s_field * v**2 + coeffs.t_field * v * vx


# ---------------------------------------------------------------------------
# expansion-order measurement
# ---------------------------------------------------------------------------

@dataclass
class OrderReport:
    claim: str
    eps_values: list[float]
    errors: list[float]
    orders: list[float] = field(default_factory=list)
    fitted_order: float = float("nan")
    threshold: float = 0.0

    def __post_init__(self):
        e = np.asarray(self.errors)
        r = np.asarray(self.eps_values)
        with np.errstate(divide="ignore", invalid="ignore"):
            self.orders = list(np.log(e[:-1] / e[1:]) / np.log(r[:-1] / r[1:]))
        self.fitted_order = float(np.polyfit(np.log(r), np.log(e), 1)[0])

    @property
    def passed(self) -> bool:
        return bool(self.fitted_order >= self.threshold)

    def to_dict(self) -> dict:
        return {"claim": self.claim, "eps": self.eps_values, "errors": self.errors,
                "orders": self.orders, "fitted_order": self.fitted_order,
                "threshold": self.threshold, "pass": self.passed}


def _ratio_claims(params: ModelParams, bathy: Bathymetry, zeta: np.ndarray,
                  coeffs: CoeffTable):
    """The four layer-ratio expansions and their exact counterparts."""
    b = bathy.b.values
    f, g = coeffs.f, coeffs.g
    gm, d, beta = params.gamma, params.delta, params.beta

    def exact1(eps):
        h1 = 1 - eps * zeta
        h2 = 1 / d + eps * zeta - beta * b
        return h1 / (h1 + gm * h2)

    def exact2(eps):
        h1 = 1 - eps * zeta
        h2 = 1 / d + eps * zeta - beta * b
        return h2 / (h1 + gm * h2)

    return [
        ("upper_ratio_first_order", exact1, lambda eps: f + 0 * zeta, 0.9),
        ("lower_ratio_first_order", exact2, lambda eps: g + 0 * zeta, 0.9),
        ("upper_ratio_second_order", exact1,
         lambda eps: f * (1 - eps * zeta + eps * zeta * (1 - gm) * f), 1.9),
        ("lower_ratio_second_order", exact2,
         lambda eps: f * (1 / d + eps * zeta - beta * b) + eps * zeta * (1 - gm) * f * g,
         1.9),
    ]


def expansion_order(state, bathy: Bathymetry, coeffs: CoeffTable,
                    params: ModelParams,
                    eps_sequence=(0.1, 0.05, 0.025, 0.0125)) -> list[OrderReport]:
    """Measure every claimed remainder order over the amplitude sequence.

    The probe state is reused at each amplitude; mu and beta stay fixed (the
    operator expansions carry no mu).
    """
    from dataclasses import replace

    reports = []
    zeta = state.zeta.values
    eps_list = list(eps_sequence)

    for claim, exact, approx, thr in _ratio_claims(params, bathy, zeta, coeffs):
        errs = [float(np.max(np.abs(exact(e) - approx(e)))) for e in eps_list]
        reports.append(OrderReport(claim, eps_list, errs, threshold=thr))

    def at_eps(e):
        return replace(params, eps=e)

    errs_q, errs_r = [], []
    for e in eps_list:
        p_e = at_eps(e)
        errs_q.append(float(np.max(np.abs(
            eval_Qbar(state, bathy, p_e) - eval_Q_expansion(state, bathy, coeffs, p_e)))))
        errs_r.append(float(np.max(np.abs(
            eval_Rbar(state, bathy, p_e) - eval_R_expansion(state, bathy, coeffs, p_e)))))
    reports.append(OrderReport("Qbar_vs_expansion", eps_list, errs_q, threshold=1.9))
    reports.append(OrderReport("Rbar_vs_expansion", eps_list, errs_r, threshold=0.9))
    return reports
