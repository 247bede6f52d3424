"""Minimum average deviance estimation (MADE) for sufficient dimension reduction.

Exponential-family local likelihood regression on a reduced predictor
``B^T X``, with ``B`` estimated on the Stiefel manifold.
"""

from .expfam import Family, ObsContext, get_family
from .kernel import Bandwidth, bandwidth_from_rule
from .made import Dataset, MadeConfig, MadeFit, fit, fit_extension, subspace_distance
from .predict import predict

__version__ = "0.1.0"

__all__ = [
    "Family", "ObsContext", "get_family", "Bandwidth", "bandwidth_from_rule", "Dataset",
    "MadeConfig", "MadeFit", "fit", "fit_extension", "subspace_distance", "predict",
    "__version__",
]
