"""spgrfit: joint quantitative parameter mapping from multi-echo spoiled
gradient echo acquisitions.

Maximum-likelihood and JTV-regularised MAP estimation of amplitude, R1,
R2* and MT saturation maps, with a stabilised second-order optimiser,
synthetic-data experiment drivers and Laplace-approximation uncertainty.
"""

from .core import (LogParams, EchoSpec, Contrast, VolumeGrid, ParameterMaps,
                   FitConfig, FitReport, to_natural, from_natural)
from ._kernels import get_backend, set_backend, available_backends

__version__ = "0.1.0"

__all__ = [
    "LogParams", "EchoSpec", "Contrast", "VolumeGrid", "ParameterMaps",
    "FitConfig", "FitReport", "to_natural", "from_natural",
    "get_backend", "set_backend", "available_backends", "__version__",
]
