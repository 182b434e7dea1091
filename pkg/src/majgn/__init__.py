"""Inexact Gauss-Newton iterations with majorant-based convergence certificates."""

from .errors import (AnnotationInvalid, BoundViolated, InsufficientData, InvalidParameter,
                     MajgnError, NotFound, OutOfDomain, OutOfRadius, PolicyInfeasible,
                     QuadratureFailure, RankDeficient, Singular, SingularB, SolverError,
                     UnknownProblem)
from .gn_solver import (BStrategy, IterationRecord, ProblemInstance, ResidualPolicy,
                        SolverConfig, Trace, gn_step, solve, trace_to_csv, trace_to_json)
from .majorant import (GeneralizedLipschitzParams, HolderParams, MajorantFunction, PowerSum,
                       RadiusReport, SmaleParams, SolverRates, check_h3, glip_majorant,
                       holder_majorant, lipschitz_majorant, majorant_sequence, newton_map,
                       radii, radius_nu, radius_report, radius_rho, smale_majorant)
from .operator_core import (DenseOperator, cond_number, perturbed_pinv_bound, pinv_apply,
                            pinv_norm, spectral_norm)
from .problems import AnnotatedProblem, builtin, catalog, validate_annotation
from .verification import (BoundReport, CalibratedRun, calibrated_run, certify_trace,
                           check_pointwise_bounds, empirical_order,
                           linearization_error)

__version__ = "0.1.0"
