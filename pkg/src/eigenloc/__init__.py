"""Localized L^p eigenfunction bounds on the round sphere and flat torus, measured numerically."""
from __future__ import annotations

from .analysis import (
    AuditReport,
    ScalingFit,
    ScalingLaw,
    audit_improvement_4_7,
    audit_localized,
    audit_operator_bound,
    audit_theorem_1_2,
    critical_exponent,
    fit_scaling,
    sigma,
)
from .covering import BallCovering, build_covering, covering_chain_audit
from .errors import CoverageError, DimensionError, EigenlocError, ParameterError, ResolutionError
from .geometry import (
    BallSpec,
    ManifoldModel,
    Point,
    QuadratureGrid,
    TubeSpec,
    build_grid,
    generate_centers,
    geodesic_distance,
)
from .harmonics import (
    EigenfunctionField,
    SpectralExpansion,
    highest_weight_field,
    legendre_like_eval,
    random_window_field,
    torus_wave,
    zonal_field,
)
from .measures import (
    Cap,
    NormReport,
    Rectangle,
    l2_ball_norm,
    lp_norm,
    qe_statistic,
    sup_ball_norm,
    tube_mass,
)
from .spectral_filter import (
    FilterKernelSample,
    WindowFilterSpec,
    apply_filter,
    cluster_project,
    filter_kernel,
    make_rho,
)

__version__ = "0.1.0"
