"""surfwave: damped wave equation on closed triangulated surfaces.

Builds the geometric damping configuration (visibility partition, curvature
admissibility, tubular cut-off), integrates the damped wave equation with an
energy-exact implicit midpoint scheme, and certifies energy-decay envelopes
from the nonlinear decay calculus.

Sign convention: the shape operator is B = -dN (outward Gauss map), so the
unit sphere has H = -1.
"""

from .mesh import (
    MeshError,
    SurfaceMesh,
    ValidationReport,
    generate_icosphere,
    generate_torus,
    load_mesh,
    save_off,
    validate_closed_manifold,
)
from .geometry import (
    CurvatureField,
    DampingProfile,
    GeometryError,
    RegionDecomposition,
    build_cutoff,
    build_damping,
    check_admissible_patch,
    classify_visibility,
    cutoff_profile,
    geodesic_distance,
    m0_patches,
    shape_operator,
    vertex_normals_and_areas,
)
from .operators import (
    DiscreteOperators,
    assemble_mass,
    assemble_stiffness,
    build_operators,
    first_nonzero_eigenvalue,
    project_zero_mean,
    tangential_gradient,
)
from .dynamics import (
    ConvergenceError,
    FeedbackLaw,
    SimulationConfig,
    Trajectory,
    WaveState,
    dissipation_residual,
    make_feedback,
    make_state,
    multiplier_residual,
    simulate,
    step,
)
from .decay import (
    DecayEnvelope,
    DecayError,
    MonotoneFn,
    build_chain,
    certify,
    closed_form_envelope,
    construct_h,
    make_envelope,
    solve_envelope,
)
from .harness import (
    ExperimentConfig,
    PRESETS,
    build_components,
    load_config,
    preset_config,
    run_experiment,
    verify_run,
)

__version__ = "0.1.0"
