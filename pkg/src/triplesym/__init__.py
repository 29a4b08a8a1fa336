"""Bezoutian symmetrizers, weighted energies and cone solvers for the third-order
hyperbolic symbol tau^3 - a(t,x) tau - b(t,x) near triple characteristics."""

__version__ = "0.1.0"

from .errors import (AnalysisError, ConfigurationError, ConstructionError, InputError, NumericalError,
                     QualityError, TripleSymError)
from .grids import Grid
from .symbols import (CoefficientField, DoubleField, check_effective_hyperbolicity, check_hyperbolicity,
                      double_family, make_family)
from .bezoutian import (Bezoutian, SpectralFrame, build_bezoutian, certify_matrix_orders, certify_skon_bounds,
                        eigen_decompose, frame_derivatives, frame_of, reduced_roots)
from .calculus import (certify_coefficient_derivatives, certify_eigenvalue_derivatives,
                       certify_lambda1_log_derivative)
from .weights import (WeightPartition, build_alpha_partition, build_partition, certify_general_triple_conditions,
                      certify_general_weight_conditions, certify_key_proposition, extract_root_profile)
from .energy_t import make_system, measure_derivative_loss, monitor_weighted_energy, solve_frequency
from .solver_x import (ConeDomain, GridSolveResult, energy_inequality_x, factored_double_energy, solve_cone,
                       solve_double, solve_strip, spacelike_check, stokes_identity_residual,
                       verify_boundary_positivity)

__all__ = [name for name in dir() if not name.startswith("_")]
