"""Numerical laboratory for self-shrinkers of mean curvature flow in R^3."""

from .catalog import eval_frame, make_shrinker, sample_mesh, shrinker_residual
from .mesh import (
    EmbeddedSurfaceMesh,
    curvature_tensors,
    discrete_shrinker_residual,
    mean_curvature_vectors,
    validate,
)
from .spectrum import assemble, first_eigenpairs, rayleigh_quotient

__all__ = [
    "EmbeddedSurfaceMesh",
    "assemble",
    "curvature_tensors",
    "discrete_shrinker_residual",
    "eval_frame",
    "first_eigenpairs",
    "make_shrinker",
    "mean_curvature_vectors",
    "rayleigh_quotient",
    "sample_mesh",
    "shrinker_residual",
    "validate",
]

__version__ = "0.1.0"
