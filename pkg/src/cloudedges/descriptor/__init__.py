"""Multi-scale geometric descriptors built on algebraic sphere fits."""

from .covariance import classify_covariance, edge_score_covariance
from .gls import (GlsSample, gls_reparameterize, scale_derivatives,
                  spatial_normal_jacobian)
from .sampling import ScaleSampling, build_scale_sampling
from .sphere import (AlgebraicSphere, MlsResult, eval_field, eval_gradient,
                     fit_sphere, mls_project, normalize_sphere,
                     project_to_sphere)
from .ssm import (FeatureSet, FitMethod, ScaleSpaceMatrix, build_ssm,
                  load_ssm, save_ssm)

__all__ = [
    "AlgebraicSphere",
    "FeatureSet",
    "FitMethod",
    "GlsSample",
    "MlsResult",
    "ScaleSampling",
    "ScaleSpaceMatrix",
    "build_scale_sampling",
    "build_ssm",
    "classify_covariance",
    "edge_score_covariance",
    "eval_field",
    "eval_gradient",
    "fit_sphere",
    "gls_reparameterize",
    "load_ssm",
    "mls_project",
    "normalize_sphere",
    "project_to_sphere",
    "save_ssm",
    "scale_derivatives",
    "spatial_normal_jacobian",
]
