"""twistband: mixed Dirichlet/Neumann strip waveguides, their bound states,
threshold resonances, and the 1D effective resolvents that approximate them."""

__version__ = "0.1.0"

from .convergence import (
    DEFAULT_LAMBDA,
    EPS_DEFAULT,
    BumpComponent,
    ErrorTable,
    GridPolicy,
    OverlapCase,
    RateFit,
    SweepRow,
    TestFunctionSpec,
    WindowCase,
    bounded_ratio,
    default_test_family,
    discretization_guard,
    fit_rate,
    run_case,
    sample_input,
    smooth_bump,
    window_test_family,
)
from .discrete import (
    Grid,
    ModeBump,
    RadiationSpec,
    SolveError,
    SparseOperator,
    assemble_operator,
    build_grid,
    bump_field,
    mode_sum_reference,
    slice_threshold,
    solve_resolvent,
)
from .effective import (
    DIRICHLET_AT_ZERO,
    FREE_LINE,
    EffectiveKind,
    TwistedData,
    apply_effective_resolvent,
    dirichlet_at_pm_l,
    effective_term_field,
    green_kernel,
    twisted_at_zero,
    twisted_data,
    twisted_explicit_solution,
)
from .geometry import (
    DECAY_MARGIN,
    SECOND_MODE_RATE,
    TRANSVERSE_THRESHOLD,
    BoundaryPartition,
    Geometry,
    GeometryError,
    GridField,
    LineFunction,
    OverlapRegime,
    SpectralParameter,
    WindowRegime,
    field_norm,
    make_geometry,
    mode_energy,
    project_mode,
    scaled_norms,
    single_junction_partition,
    transverse_mode,
)
from .spectral import (
    CountingGridSpec,
    CriticalLength,
    count_bound_states,
    eigenvalues_below,
    find_critical_length,
)
from .threshold import (
    AuxSolution,
    IdentityReport,
    ThresholdError,
    ThresholdGridSpec,
    VirtualLevel,
    aux_grid,
    aux_min_singular_value,
    corner_exponent,
    default_aux_source,
    solve_aux_problem,
    solve_virtual_level,
    threshold_identity_residuals,
    twisted_min_singular_value,
)

__all__ = [
    "__version__",
    "apply_effective_resolvent",
    "assemble_operator",
    "aux_grid",
    "aux_min_singular_value",
    "AuxSolution",
    "BoundaryPartition",
    "bounded_ratio",
    "build_grid",
    "bump_field",
    "BumpComponent",
    "corner_exponent",
    "count_bound_states",
    "CountingGridSpec",
    "CriticalLength",
    "DECAY_MARGIN",
    "default_aux_source",
    "DEFAULT_LAMBDA",
    "default_test_family",
    "dirichlet_at_pm_l",
    "DIRICHLET_AT_ZERO",
    "discretization_guard",
    "effective_term_field",
    "EffectiveKind",
    "eigenvalues_below",
    "EPS_DEFAULT",
    "ErrorTable",
    "field_norm",
    "find_critical_length",
    "fit_rate",
    "FREE_LINE",
    "Geometry",
    "GeometryError",
    "green_kernel",
    "Grid",
    "GridField",
    "GridPolicy",
    "IdentityReport",
    "LineFunction",
    "make_geometry",
    "mode_energy",
    "mode_sum_reference",
    "ModeBump",
    "OverlapCase",
    "OverlapRegime",
    "project_mode",
    "RadiationSpec",
    "RateFit",
    "run_case",
    "sample_input",
    "scaled_norms",
    "SECOND_MODE_RATE",
    "single_junction_partition",
    "slice_threshold",
    "smooth_bump",
    "solve_aux_problem",
    "solve_resolvent",
    "solve_virtual_level",
    "SolveError",
    "SparseOperator",
    "SpectralParameter",
    "SweepRow",
    "TestFunctionSpec",
    "threshold_identity_residuals",
    "ThresholdError",
    "ThresholdGridSpec",
    "transverse_mode",
    "TRANSVERSE_THRESHOLD",
    "twisted_at_zero",
    "twisted_data",
    "twisted_explicit_solution",
    "twisted_min_singular_value",
    "TwistedData",
    "VirtualLevel",
    "window_test_family",
    "WindowCase",
    "WindowRegime",
]
