"""Yamabe flow on radial model backgrounds, solved on an exhaustion by balls."""

from .background import (
    BackgroundManifold,
    GeometryConstants,
    InadmissibleBackground,
    InvalidDimension,
    background_scalar_curvature,
    custom,
    euclidean,
    geometry_constants,
    hyperbolic,
    volume_density,
    yamabe_invariant_model,
)
from .grid import ConformalField, DomainError, RadialGrid, integrate_radial, laplace_beltrami_radial, radial_gradient_sq
from .initial import InitialDataSpec
from .flow import (
    DomainProblem,
    FlowTrajectory,
    PositivityError,
    RunFailure,
    StepFailure,
    boundary_value,
    build_cutoff,
    pde_rhs,
    run_domain,
    step_flow,
    truncate_initial_data,
    u_power_form_residual,
)
from .exhaustion import ExhaustionReport, run_exhaustion
from .diagnostics import (
    BoundsReport,
    CurvatureField,
    check_r_lower,
    check_sandwich,
    curvature_from_time_derivative,
    evoR_residual,
    lp_curvature_norm,
    refinement_study,
    scalar_curvature_conformal,
    sobolev_check,
)
from .config import ConfigError, Scenario, load_scenario
from .runner import RunReport, emit_plot_data, run_batch, verify_suite

__version__ = "0.1.0"
