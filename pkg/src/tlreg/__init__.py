"""Transfer learning for linear regression: estimators, risk formulas and a sweep harness."""

from .analytic import (GammaTLInf, Regime, SpectralSolution, c_tl, gamma_tl_inf, mltn_risk,
                       mp_stieltjes, ridge_opt_risk, solve_fixed_point, source_risk,
                       tl_beats_ridge, tl_opt_alpha_asymptotic,
                       tl_opt_risk_orthonormal_asymptotic, tl_risk_general_asymptotic,
                       tl_risk_seminonasymptotic)
from .estimators import (Estimate, lmmse_fit, mltn_fit, optimal_alpha_ridge,
                         optimal_alpha_tl, ridge_fit, tl_fit)
from .linalg import Rng
from .model import (Dataset, MisspecSpec, SourceSpec, TargetSpec, TaskRelation,
                    empirical_risk, misspec_effective, sample_misspecified)
from .operators import OperatorSpec, build_operator, parse_operator

__version__ = "0.1.0"
