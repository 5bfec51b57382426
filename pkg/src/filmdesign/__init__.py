"""Two-phase thin-film optimal design with perimeter penalization.

Evaluates and reduces the bulk and surface energy densities of a two-phase
design on a thin domain, solves the rescaled slab problem and its planar
limit, and checks numerically that the slab minima approach the planar
minimum as the thickness parameter shrinks.
"""

from .densities import (
    BulkDensitySpec,
    CustomDensity,
    IsotropicQuadratic,
    LoadField,
    PowerLaw,
    QuarticWell,
    ShiftedQuadratic,
    TwoWell,
    eval_full,
    eval_membrane,
    kohn_strang_spec,
    reduce_membrane,
    validate_growth,
)
from .envelope import (
    EnvelopeEstimate,
    SliceSpec,
    cell_problem_ladder,
    cell_problem_upper,
    envelope_slice,
    laminate_upper,
)
from .errors import ConfigError, DomainError, SolverError
from .mesh import PlanarMesh, SlabMesh
from .solve2d import (
    Displacement2D,
    EnergyBreakdown,
    PhaseField2D,
    energy_2d,
    minimize_u,
    solve_limit,
    update_phase,
)
from .solve3d import (
    Displacement3D,
    PhaseField3D,
    VectorPolynomial,
    energy_3d,
    minimize_eps,
    perimeter_roundtrip_check,
    rescale_roundtrip_check,
)
from .surface import (
    AngularModulated,
    Euclidean,
    LpNorm,
    PlanarSurfaceDensity,
    WeightedQuadratic,
    convexify_planar,
    surface_reduce,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
