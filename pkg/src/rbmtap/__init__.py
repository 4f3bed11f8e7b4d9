"""TAP magnetizations of bipartite Ising models with rotation invariant couplings,
and the large-system theory of the iteration that computes them."""

from .ensembles import (CouplingMatrix, Model, SpectralData, compute_svd, load_matrix,
                        load_spectrum, sample, sample_column_orthogonal, sample_from_singular_values,
                        sample_iid_gaussian, save_matrix, save_spectrum)
from .errors import (ConvergenceError, DimensionError, DomainError, InstabilityError,
                     InvertibilityError, NumericalError, PoleProximityError, RbmTapError,
                     SingularThetaError, UsageError)
from .generating import (GeneratingFunction, GreenFunction, green_w, green_w_prime, green_wt,
                         green_wt_prime, i_prime, i_second)
from .order_params import (OrderParams, SolverConfig, StabilityReport, ThetaCoefficients,
                           gauss_expect, solve, solve_green_fixed_point, solve_rs_fixed_point,
                           stability_report, theta_analytic, theta_green)
from .tap_dynamics import (MagnetizationResult, RunResult, TapOperator, TapState, build_operator,
                           cross_correlations, exact_enumeration, init_state, run, step,
                           tap_residual)
from .dft_theory import (ConvergenceReport, TwoTimeCovariance, covariance_recursion, g_function,
                         g_prime, instability_bisection, mu_gamma, predict)

__version__ = "0.1.0"
