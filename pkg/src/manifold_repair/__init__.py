"""Manifold resampling and hole repair for point clouds in high-dimensional space."""
from .core import KernelParams, PointCloud
from .errors import (InsufficientDataError, InvalidInputError, IOFailure, ManifoldRepairError,
                     NumericalAbort, ParseError)
from .mlop import OptimizerConfig, run_mlop
from .rmlop import HoleSpec, RepairConfig, run_rmlop

__version__ = "0.1.0"

__all__ = [
    "HoleSpec", "InsufficientDataError", "InvalidInputError", "IOFailure", "KernelParams",
    "ManifoldRepairError", "NumericalAbort", "OptimizerConfig", "ParseError", "PointCloud",
    "RepairConfig", "run_mlop", "run_rmlop",
]
