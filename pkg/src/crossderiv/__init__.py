"""Randomized estimation of cross-partial derivatives, derivative-based
ANOVA emulators and derivative-based sensitivity indices."""

from .derivatives import (
    DerivativeEstimate,
    EvaluationDesign,
    ModelFunction,
    build_design,
    estimate_cross_partial,
    estimate_family,
    estimate_family_batch,
    estimate_from_runs,
)
from .distributions import Gaussian, ProductDistribution, RandomStream, Uniform, parse_distribution
from .emulator import DbAnovaEmulator, EmulatorConfig, build
from .errors import A2Error, AlignmentError, CrossDerivError, DomainError, ParameterError, SingularityError
from .harness import ExperimentPlan, gap_curve, mse_curve, run_plan
from .perturb import PerturbationConfig, default_config, validate_a2
from .schemes import (
    ConstraintScheme,
    build_scheme,
    default_nodes,
    family_coefficients,
    scheme_coefficients,
    solve_coefficients,
    verify_constraints,
)
from .sensitivity import GradientSample, IndexEstimate, direct_indices, plugin_gradients, plugin_indices

__version__ = "0.1.0"
