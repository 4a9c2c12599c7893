"""Linearly implicit (Rosenbrock-type) integration for stiff ODE systems.

The package bundles one-step ROW/W engines in two algebraically equivalent
stage formulations, two-step W and peer engines, extrapolated linearly
implicit Euler, a linear stability analyzer, and a small problem library,
all instrumented for factorization reuse. Plotting helpers live in
``rowsolve.plots``; the command line entry point in ``rowsolve.cli``.
"""

from .convergence import (DEFAULT_N_LIST, OrderMeasurement, final_error,
                          fit_slope, fixed_step_errors, measure_order,
                          observed_orders)
from .errors import (EvaluationError, IntegrationFailure, PoleError,
                     SingularMatrixError, StepFailure, StructuralError)
from .linsolve import (DIRECT, TRANSFORMED, FactorizationStore, SolveCounters,
                       StageMatrixFactorization, factor_stage_matrix,
                       solve_stage, stage_matrix)
from .onestep import (EMBEDDED, RICHARDSON, ControlSettings,
                      ExtrapolationTable, StepOutcome, StepProposal,
                      Trajectory, estimate_error, extrapolate_lie, fixed_run,
                      integrate, propose_step, row_step,
                      row_step_nonautonomous, weighted_error)
from .problems import (Analytic, ForwardDifference, Frozen, JacobianCache,
                       OdeSystem, TimeLagged, autonomize, eval_jacobian,
                       fd_jacobian, make_dahlquist, make_heat1d,
                       make_order_reduction_problem, time_partial,
                       with_strategy)
from .stability import (CrankNicolson, ExplicitRK, RowStability, ScanSettings,
                        StabilityReport, classify, region_scan)
from .tableau_io import (format_tableau, load_tableau, parse_tableau_text,
                         save_tableau)
from .tableaus import (PeerTableau, RowTableau, TransformedTableau,
                       TwoStepWTableau, ValidationReport, builtin_methods,
                       get_method, inverse_transform,
                       order_condition_residuals, three_stage_third_order,
                       transform, two_stage_family_member,
                       two_stage_third_order_gammas, validate)
from .twostep import (TwoStepState, from_row, integrate_twostep, peer_step,
                      peer_spectral_radius, peer_transfer_matrix,
                      row_reduction, tsw_step)

__version__ = "0.1.0"
