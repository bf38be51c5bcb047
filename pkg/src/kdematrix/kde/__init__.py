"""Fast KDE backends behind one build/query interface."""
from .base import (
    KdeConfig,
    KdeEstimator,
    available_backends,
    backend_class,
    kde_build,
    kde_query,
    register_backend,
    repetitions,
)
from .exact import ExactKde
from .fgt import FgtKde, monomial_exponents, monomial_features, taylor_order
from .uniform import UniformKde, uniform_sample_size

__all__ = [
    "ExactKde",
    "FgtKde",
    "KdeConfig",
    "KdeEstimator",
    "UniformKde",
    "available_backends",
    "backend_class",
    "kde_build",
    "kde_query",
    "monomial_exponents",
    "monomial_features",
    "register_backend",
    "repetitions",
    "taylor_order",
    "uniform_sample_size",
]
