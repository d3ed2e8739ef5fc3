"""Regime-switching SDEs: Wong-Zakai approximations, the Lamperti transform,
pathwise bounds and strong-rate estimation."""

__version__ = "0.1.0"

from .analysis import (BoundConstants, ItoFunction, RateEstimate, a_lambda, bound_constants,
                       check_pathwise_bound, check_x_bound, estimate_rate, verify_ito_rs)
from .drivers import (BrownianPath, DriverPath, polygonal_approx, polygonal_rate, sample_brownian,
                      sup_distance, transport_process, transport_rate)
from .jumps import (DeterministicGenerator, InhomogeneousMarkovGenerator, JumpPath, MarkovGenerator,
                    SemiMarkovGenerator, count_jumps, poisson_tail_bound, sample_jump_path)
from .lamperti import LampertiKit
from .model import (AssumptionGrid, CoefficientSet, RegimeCoefficients, constant_model, mmbm_model,
                    sin_volatility_model, time_arctan_model, validate_assumptions)
from .solvers import (SolutionPath, build_S, euler_maruyama_rs, inverse_transform, lamperti_flow,
                      wz_ode_solve)
from .specfun import f_gamma_q, f_inverse, lambert_w0
