"""Two-layer internal-wave model over large-amplitude topography.

Numerical library and CLI: coefficient construction, the symmetric elliptic
operator, reference layer operators with expansion-order verification, a
method-of-lines integrator, and Sobolev/energy diagnostics.
"""

__version__ = "0.1.0"

from .grid import (PeriodicGrid, Field, deriv, bessel_potential, inner,
                   sobolev_norm, xs_norm)
from .params import (ModelParams, RegimeCaps, ValidationReport,
                     check_regime_sw, check_regime_ch,
                     check_bottom_admissibility, check_depth,
                     check_ellipticity, check_symmetrizer_positivity,
                     check_lemma41_sufficient)
from .coeffs import (Bathymetry, CoeffTable, build_coeff_table, residual_report,
                     flat_bathymetry, gaussian_bump_bathymetry, cosine_bathymetry)
from .operator_t import (TOperatorAssembly, assemble, apply, solve,
                         rayleigh_floor, OperatorSolveError)
from .gn_ref import (LayerFields, apply_calT, eval_Qbar, eval_Qbar_expanded,
                     eval_Rbar, eval_Q_expansion, eval_R_expansion,
                     expansion_order, OrderReport)
from .evolution import (State, SimConfig, SimResult, make_state, flux_functions,
                        rhs, step_rk4, cfl_dt, simulate, energy_Es,
                        eqcons_residual, derivation_order, SimulationBlowup,
                        predicted_mode_frequency)
