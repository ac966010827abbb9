"""Partition the perturbation domain of a parametric SDO problem.

The package combines a small primal-dual interior-point solver, auxiliary
boundary problems, Davidenko-ODE solution tracking with singularity
sharpening, and a numerical classifier for singular points, to split a
bounded parameter interval into invariancy intervals, nonlinearity intervals
and transition points of the optimal partition.
"""

from .model import (
    BUILTIN_NAMES,
    DifferentiableMap,
    KKTMap,
    KKTPoint,
    ParametricSDO,
    builtin,
    toy_map,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_NAMES",
    "DifferentiableMap",
    "KKTMap",
    "KKTPoint",
    "ParametricSDO",
    "builtin",
    "toy_map",
    "validate",
    "__version__",
]
