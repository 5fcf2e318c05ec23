"""Density bounds for maxima of possibly degenerate Gaussian vectors, with
Monte Carlo and oracle verification and wild-bootstrap experiments."""

__version__ = "0.1.0"

from .covariance import CovarianceModel, CovarianceSpec, build, load_spec
from .numerics import DomainError
from .sampler import EmpiricalMaxLaw, SampleConfig, sample_maxima

__all__ = [
    "CovarianceModel",
    "CovarianceSpec",
    "DomainError",
    "EmpiricalMaxLaw",
    "SampleConfig",
    "__version__",
    "build",
    "load_spec",
    "sample_maxima",
]
