"""Kahler-Ricci solitons on toric surfaces via normalized Ricci flow of the symplectic potential."""
__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BlowUpError,
    ConfigurationError,
    DegeneracyError,
    DomainError,
    NumericalError,
    SnapshotFormatError,
    ToricSolitonError,
)
from .polytope import (  # noqa: E402
    BUILTIN_SURFACES,
    DelzantPolytope,
    Edge,
    SolitonVector,
    builtin_surface,
    canonical_hessian,
    canonical_potential,
    contains,
    edge_values,
)
from .grid import PolytopeGrid, ScalarField, build_grid  # noqa: E402
from .geometry import (  # noqa: E402
    curvature_invariants,
    flow_driver,
    legendre_map,
    metric_from_potential,
    ricci_potential,
)
from .flow import FlowReport, FlowState, Schedule, gauge_project, run, soliton_residual, step  # noqa: E402
from .soliton_analysis import (  # noqa: E402
    QuarticFit,
    euler_characteristic_check,
    fit_quartic,
    moment_alpha,
    verify_soliton_tensor,
)
from .entropy import EntropyResult, entropy_nu, partition_closed_dp2, partition_quadrature  # noqa: E402
