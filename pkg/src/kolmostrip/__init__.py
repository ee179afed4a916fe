"""Generalized strips, exact prox maps of polyhedral functions, and
1-Lipschitz near-identity maps that send sets onto polyhedra."""

from __future__ import annotations

__version__ = "0.1.0"

from ._backend import BACKEND
from .errors import (
    BudgetError,
    DimensionError,
    InvariantError,
    KolmostripError,
    ParseError,
    PieceCapError,
    PreconditionError,
    ProxConvergenceError,
)
from .geom import AffineFunc, BoundingBox, ClassicalStrip, Hyperplane, SampleStream
from .gstrip import GenStrip, from_classical, gamma_upper_bound, image_hyperplanes, member, merge, merge_all, prune
from .kolmap import PipelineConfig, PipelineReport, ProxMap, build_boundary_cover, run_pipeline
from .polyfun import DEFAULT_TOL, PolyhedralFunc, ProxResult, Tolerances, lip, prox, prox_many, prox_oracle

__all__ = [
    "BACKEND",
    "AffineFunc",
    "BoundingBox",
    "BudgetError",
    "ClassicalStrip",
    "DEFAULT_TOL",
    "DimensionError",
    "GenStrip",
    "Hyperplane",
    "InvariantError",
    "KolmostripError",
    "ParseError",
    "PieceCapError",
    "PipelineConfig",
    "PipelineReport",
    "PolyhedralFunc",
    "PreconditionError",
    "ProxConvergenceError",
    "ProxMap",
    "ProxResult",
    "SampleStream",
    "Tolerances",
    "build_boundary_cover",
    "from_classical",
    "gamma_upper_bound",
    "image_hyperplanes",
    "lip",
    "member",
    "merge",
    "merge_all",
    "prox",
    "prox_many",
    "prox_oracle",
    "prune",
    "run_pipeline",
]
