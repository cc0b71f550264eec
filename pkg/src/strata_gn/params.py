"""Dimensionless parameters and admissibility checks.

Holds the parameter sextuple (mu, eps, delta, gamma, beta, bo) plus regime
caps, and implements every validity predicate of the model as a pure,
report-producing function: the shallow-water and medium-amplitude regimes,
the bottom-singularity exclusions (H0), the depth (H1) and ellipticity (H2)
floors, the symmetrizer positivity (H3), and the single sup-norm sufficient
condition implying H1 and H2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np


@dataclass(frozen=True)
class RegimeCaps:
    """Bounds defining the admissible parameter box."""

    mu_max: float = 1.0
    delta_min: float = 0.1
    delta_max: float = 10.0
    bo_min: float = 1.0
    beta_max: float = 1.0
    eps_max: float = 1.0


@dataclass(frozen=True)
class ModelParams:
    mu: float
    eps: float
    delta: float
    gamma: float
    beta: float
    bo: float = math.inf
    M: float = 1.0
    nu0: float = 0.05
    caps: RegimeCaps = field(default_factory=RegimeCaps)

    @property
    def inv_bo(self) -> float:
        """1/bo, exactly 0 when bo is infinite; every formula uses this."""
        return 0.0 if math.isinf(self.bo) else 1.0 / self.bo

    @property
    def eps_cap(self) -> float:
        """min(M sqrt(mu_max), 1), the amplitude cap of the medium regime."""
        return min(self.M * math.sqrt(self.caps.mu_max), 1.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bo"] = "inf" if math.isinf(self.bo) else self.bo
        return d


@dataclass
class Violation:
    index: int
    quantity: str
    value: float

    def to_dict(self) -> dict:
        return {"index": self.index, "quantity": self.quantity, "value": self.value}


@dataclass
class ValidationReport:
    check: str
    passed: bool
    floor_found: float
    violations: list[Violation] = field(default_factory=list)
    applicable: bool = True

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "passed": self.passed,
            "floor_found": self.floor_found,
            "violations": [v.to_dict() for v in self.violations],
            "applicable": self.applicable,
        }


def _scalar_report(name, conditions) -> ValidationReport:
    """Build a report from (quantity, ok, value) triples at index -1."""
    violations = [Violation(-1, q, float(v)) for q, ok, v in conditions if not ok]
    return ValidationReport(name, not violations, math.inf if not violations else 0.0,
                            violations)


def check_regime_sw(params: ModelParams) -> ValidationReport:
    """Shallow-water parameter box: every inequality must hold."""
    c = params.caps
    conds = [
        ("mu", 0 < params.mu <= c.mu_max, params.mu),
        ("eps", 0 <= params.eps <= 1, params.eps),
        ("delta", c.delta_min < params.delta < c.delta_max, params.delta),
        ("gamma", 0 <= params.gamma < 1, params.gamma),
        ("beta", 0 <= params.beta <= c.beta_max, params.beta),
        ("bo", params.bo >= c.bo_min, params.bo),
    ]
    rep = _scalar_report("regime_sw", conds)
    rep.floor_found = float(min(params.mu, 1 - params.gamma)) if rep.passed else 0.0
    return rep


def check_regime_ch(params: ModelParams, nu_field: np.ndarray) -> ValidationReport:
    """Medium-amplitude regime: SW box, eps <= M sqrt(mu), nu(b) >= nu0."""
    sw = check_regime_sw(params)
    violations = list(sw.violations)
    if params.eps > params.M * math.sqrt(params.mu) + 1e-15:
        violations.append(Violation(-1, "eps <= M sqrt(mu)", params.eps))
    nu_field = np.asarray(nu_field, dtype=float)
    nu_min = float(np.min(nu_field))
    if nu_min < params.nu0:
        j = int(np.argmin(nu_field))
        violations.append(Violation(j, "nu floor", nu_min))
    return ValidationReport("regime_ch", not violations, nu_min, violations)


def bottom_discriminant(params: ModelParams) -> float:
    """Discriminant of the denominator quadratic in beta*b, scaled by 1/bo^2.

    The scaling keeps the expression finite as bo -> inf while preserving the
    sign, and the roots below use the same scaled form.
    """
    g, d, q = params.gamma, params.delta, params.inv_bo
    return (g * d**2 + 2 * d - 3 * g * d**2 * q) ** 2 \
        - 4 * d**2 * (1 + g * d) + 12 * d**3 * (g + d) * q


def bottom_forbidden_roots(params: ModelParams) -> list[float]:
    """Excluded values of beta*b (zeros of the coefficient-ODE denominator)."""
    disc = bottom_discriminant(params)
    if disc < 0:
        return []
    g, d, q = params.gamma, params.delta, params.inv_bo
    mid = 2 * d + g * d**2 - 3 * g * d**2 * q
    if disc == 0:
        return [mid / (2 * d**2)]
    r = math.sqrt(disc)
    return sorted(((mid - r) / (2 * d**2), (mid + r) / (2 * d**2)))


def check_bottom_admissibility(params: ModelParams, b_values: np.ndarray,
                               exclusion_radius: float = 1e-6) -> ValidationReport:
    """H0: nu(b) != 0, beta*b != 0 and beta*b clear of the forbidden roots.

    Not applicable for beta = 0 (no b-line solve happens there).
    """
    if params.beta == 0:
        return ValidationReport("bottom_admissibility", True, math.inf, [],
                                applicable=False)
    b_values = np.asarray(b_values, dtype=float)
    y = params.beta * b_values
    violations = []
    g, d = params.gamma, params.delta
    nu = (1 + g * d) / (3 * d * (g + d - g * d * y)) - params.inv_bo
    margins = [float(np.min(np.abs(nu))), float(np.min(np.abs(y)))]
    for j in np.nonzero(np.abs(nu) <= exclusion_radius)[0][:8]:
        violations.append(Violation(int(j), "nu(b) != 0", float(nu[j])))
    for j in np.nonzero(np.abs(y) <= exclusion_radius)[0][:8]:
        violations.append(Violation(int(j), "beta*b != 0", float(y[j])))
    for root in bottom_forbidden_roots(params):
        dist = np.abs(y - root)
        margins.append(float(np.min(dist)))
        for j in np.nonzero(dist <= exclusion_radius)[0][:8]:
            violations.append(Violation(int(j), f"beta*b != root {root:.6g}", float(y[j])))
    return ValidationReport("bottom_admissibility", not violations,
                            min(margins), violations)


def depth_fields(state, bathy, params: ModelParams):
    """Pointwise layer depths h1 = 1 - eps*zeta, h2 = 1/delta + eps*zeta - beta*b."""
    z = state.zeta.values
    b = bathy.b.values
    h1 = 1.0 - params.eps * z
    h2 = 1.0 / params.delta + params.eps * z - params.beta * b
    return h1, h2


def _floor_report(name: str, floor: float, fields: dict[str, np.ndarray]) -> ValidationReport:
    violations = []
    found = math.inf
    for quantity, arr in fields.items():
        lo = float(np.min(arr))
        found = min(found, lo)
        if lo < floor:
            for j in np.nonzero(arr < floor)[0][:8]:
                violations.append(Violation(int(j), quantity, float(arr[j])))
    return ValidationReport(name, not violations, found, violations)


def check_depth(state, bathy, params: ModelParams, h01: float = 0.05) -> ValidationReport:
    """H1: both layer depths bounded below by h01."""
    h1, h2 = depth_fields(state, bathy, params)
    return _floor_report("depth", h01, {"h1": h1, "h2": h2})


def check_ellipticity(state, bathy, coeffs, params: ModelParams,
                      h02: float = 0.05) -> ValidationReport:
    """H2: q1 + mu*eps*beta*kappa0*dzeta*db and q2 bounded below by h02."""
    q1eff = coeffs.q1_effective(state, params)
    q2 = coeffs.q2(state, params)
    return _floor_report("ellipticity", h02, {"q1 floor": q1eff, "q2 floor": q2})


def check_symmetrizer_positivity(state, coeffs, params: ModelParams,
                                 h03: float = 0.05) -> ValidationReport:
    """H3: Q0 + eps^2 Q1 bounded below by h03."""
    q = coeffs.symmetrizer_weight(state, params)
    return _floor_report("symmetrizer_positivity", h03, {"Q floor": q})


def check_lemma41_sufficient(state, bathy, coeffs, params: ModelParams,
                             h0: float = 0.05) -> ValidationReport:
    """Single sup-norm bound implying depth (H1) and ellipticity (H2) with floor h0.

    Uses the regime caps (mu_max, beta_max, min(M sqrt(mu_max), 1)) rather than
    the instantaneous parameters, so a pass is uniform over the whole box.
    """
    from .grid import spectral_deriv

    caps = params.caps
    eps_max = params.eps_cap
    z = state.zeta.values
    zx = spectral_deriv(z, state.zeta.grid, 1)
    b, bx = bathy.b.values, bathy.bx.values
    sup = lambda a: float(np.max(np.abs(a)))

    lhs = (
        max(sup(coeffs.kappa1), sup(coeffs.kappa2), 1.0, caps.delta_max)
        * eps_max * sup(z)
        + max(sup(coeffs.omega1), sup(coeffs.omega2), caps.delta_max)
        * caps.beta_max * sup(b)
        + sup(coeffs.eta2) * eps_max * sup(z) * caps.beta_max * sup(b)
        + caps.mu_max * eps_max * caps.beta_max * sup(coeffs.kappa0) * sup(zx) * sup(bx)
    )
    passed = lhs <= 1.0 - h0
    violations = [] if passed else [Violation(-1, "sup-norm bound", float(lhs))]
    return ValidationReport("lemma41_sufficient", passed, float(1.0 - lhs), violations)
