"""2-split fractional-step Runge-Kutta (FSRK) operator splitting toolbox.

Coefficient tables and order conditions, linear stability analysis of
split integrations, method derivation by constrained optimization, and
reaction-diffusion benchmarks with MRMS error reporting.
"""

from .errors import (
    BracketError,
    EstimationError,
    FsrkError,
    InputError,
    InstabilityError,
    PoleError,
    SearchFailureError,
    SplittingDomainError,
    StepFailureError,
)
from .integrators import (
    Trajectory,
    fd_jacobian,
    fsrk_step,
    integrate,
    rk_step,
    trajectory_to_csv,
)
from .methods import (
    LemReport,
    OrderConditionReport,
    SplittingMethod,
    adjoint,
    get_method,
    lem3,
    order_condition_residuals,
    read_method_file,
    registry,
    three_stage_family,
    three_stage_family_discriminant,
    write_method_file,
)
from .optimizer import (
    CandidateMethod,
    ContextTemplate,
    DesignSpec,
    manifold_branches,
    minimize_lem,
    minimize_xhat,
    read_design_file,
    solve_order_manifold,
)
from .plans import SubIntegratorPlan, parse_plan, plan_for_ordering, plan_from_string
from .problems import (
    MrmsReport,
    SplitProblem,
    benchmark_sample_times,
    default_fhn_benchmark,
    estimate_extreme_eigenvalues,
    floor_sig,
    largest_stable_dt,
    make_linear_pair,
    make_noncommuting,
    make_rd_fhn,
    mrms,
    read_problem_config,
    reference_solution,
    with_counting,
)
from .stability import (
    RegionRaster,
    StabilityContext,
    XHatResult,
    contour_segments,
    export_region_svg,
    find_xhat,
    fsrk_stability,
    negative_real_poles,
    origin_component,
    practical_interval,
    raster,
    raster_to_csv,
    rk_stability,
    single_var_stability,
)
from .tableaus import TABLEAUS, ButcherTableau, ExactFlow, get_tableau

__version__ = "0.1.0"

__all__ = [
    "BracketError",
    "ButcherTableau",
    "CandidateMethod",
    "ContextTemplate",
    "DesignSpec",
    "EstimationError",
    "ExactFlow",
    "FsrkError",
    "InputError",
    "InstabilityError",
    "LemReport",
    "MrmsReport",
    "OrderConditionReport",
    "PoleError",
    "RegionRaster",
    "SearchFailureError",
    "SplitProblem",
    "SplittingDomainError",
    "SplittingMethod",
    "StabilityContext",
    "StepFailureError",
    "SubIntegratorPlan",
    "TABLEAUS",
    "Trajectory",
    "XHatResult",
    "adjoint",
    "benchmark_sample_times",
    "contour_segments",
    "default_fhn_benchmark",
    "estimate_extreme_eigenvalues",
    "export_region_svg",
    "fd_jacobian",
    "find_xhat",
    "floor_sig",
    "fsrk_stability",
    "fsrk_step",
    "get_method",
    "get_tableau",
    "integrate",
    "largest_stable_dt",
    "lem3",
    "make_linear_pair",
    "make_noncommuting",
    "make_rd_fhn",
    "manifold_branches",
    "minimize_lem",
    "minimize_xhat",
    "mrms",
    "negative_real_poles",
    "order_condition_residuals",
    "origin_component",
    "parse_plan",
    "plan_for_ordering",
    "plan_from_string",
    "practical_interval",
    "raster",
    "raster_to_csv",
    "read_design_file",
    "read_method_file",
    "read_problem_config",
    "reference_solution",
    "registry",
    "rk_stability",
    "rk_step",
    "single_var_stability",
    "solve_order_manifold",
    "three_stage_family",
    "three_stage_family_discriminant",
    "trajectory_to_csv",
    "with_counting",
    "write_method_file",
    "__version__",
]
