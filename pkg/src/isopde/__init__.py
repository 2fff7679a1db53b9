"""
Symmetry of solutions to semilinear equations ``Delta_Psi u = f(u)`` on
weighted warped-product annuli: discretization, Newton solver, first
eigenvalue, leaf averages and the strong-stability threshold.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DomainError,
    EigenSolveError,
    IsopdeError,
    LinearSolveError,
    NonConvergence,
    PreconditionError,
    QuadratureError,
    ShapeError,
    SingularityError,
    WindowError,
)
from .geometry import (  # noqa: E402
    Coupling,
    FiberSpec,
    WarpedGeometry,
    annulus_volume,
    flat,
    gaussian_slab,
    leaf_data,
    polar,
    radial_coefficients,
)
from .discretize import (  # noqa: E402
    DiscreteField,
    Grid,
    LinearOperator,
    apply,
    assemble_laplacian,
    assemble_schrodinger,
    build_grid,
    sample,
)
from .nlsolve import Nonlinearity, SolveReport, newton_solve  # noqa: E402
from .stability import (  # noqa: E402
    SpectrumResult,
    check_stability,
    domain_monotonicity_check,
    lambda1,
    maximum_principle_check,
)
from .symmetry import (  # noqa: E402
    SymmetryReport,
    commutation_residual,
    killing_commutation_residual,
    leaf_average,
    symmetry_report,
)
from .thresholds import ThresholdReport, build_barrier, compute_threshold, theta  # noqa: E402
