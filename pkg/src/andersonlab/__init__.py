"""Numerical laboratory for random Schroedinger operators on finite tori.

The package builds lattice and discretized-continuum Hamiltonians with
site disorder, counts spectra by matrix inertia, estimates the standard
one- and two-point spectral bounds (Wegner / Minami and relatives), and
examines rescaled eigenvalue statistics against the Poisson benchmark --
all with counter-based randomness so every number is reproducible from
(seed, trial, stream) regardless of worker count.
"""
from .errors import (
    AndersonLabError,
    AssemblyError,
    ConfigError,
    DomainError,
    GeometryError,
    InsufficientDataError,
    MeshError,
    NumericError,
    ParameterError,
    SizeError,
    StateError,
)
from .model import (
    DisorderRealization,
    SiteDistribution,
    TorusGeometry,
    pin_site,
    quantile_transform,
    sample_disorder,
)
from .operators import (
    AssembledOperator,
    ModelSpec,
    SingleSiteProfile,
    add_rank_one,
    add_scaled_profile,
    build_continuum,
    build_lattice,
    write_coordinate_file,
)
from .spectral import (
    Interval,
    Spectrum,
    count_at_most,
    count_in,
    eigen_full,
    local_projection_trace,
    resolvent_block_norm,
    resolvent_columns,
    trace_function,
)
from .estimates import (
    Cell,
    EstimateReport,
    fixed_site_wegner,
    mean_and_stderr,
    minami_experiment,
    run_trials,
    simplicity_experiment,
    smooth_switch,
    spectral_averaging_check,
    spectral_shift_experiment,
    wegner_experiment,
)
from .dos import (
    DensityEstimate,
    IdsCurve,
    LebesguePoint,
    estimate_density,
    estimate_ids,
    lebesgue_point_scan,
    mc_resolution,
)
from .localization import (
    DecayCurve,
    EigenfunctionReport,
    GateReport,
    eigenfunction_decay,
    fractional_moment_decay,
    localization_gate,
)
from .pointprocess import (
    ConditionsReport,
    CountsTestResult,
    ProcessEnsemble,
    ProcessSample,
    SpacingTestResult,
    limit_conditions_check,
    local_process,
    poisson_counts_test,
    restricted_process,
    spacing_test,
    superposition_box_side,
    superposition_process,
)
from .properties import run_all_checks

__version__ = "0.1.0"
