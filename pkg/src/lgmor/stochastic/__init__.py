"""Parameter sampling, random boundaries, domain maps, EIM and statistics."""
from .domain_map import AffineMap, DomainMap, pullback_tensor, stochastic_map, transform_coefficients
from .eim import EimCoefficients, EimSurrogate, eim_build, eim_evaluate
from .kl import KlField, kl_expand, realize_boundary
from .params import Marginal, ParamDomain, sample_parameters
from .stats import Moments, error_metrics, moments, relative_error

__all__ = [
    "AffineMap", "DomainMap", "pullback_tensor", "stochastic_map", "transform_coefficients",
    "EimCoefficients", "EimSurrogate", "eim_build", "eim_evaluate",
    "KlField", "kl_expand", "realize_boundary",
    "Marginal", "ParamDomain", "sample_parameters",
    "Moments", "error_metrics", "moments", "relative_error",
]
