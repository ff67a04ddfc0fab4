"""Numerical laboratory for matrix cocycles.

Center-bunching functionals and classifiers, Lyapunov spectra and
filtrations, domination detection, symplectic eigenvalue flattening, and a
small gallery of exactly reproducible constructions.
"""

from importlib.metadata import PackageNotFoundError, version

from .cocycle import Cocycle, theta, window_product
from .errors import CocycleLabError, InvalidInput, NumericalFailure, StallDetected
from .symplectic_core import SplittingSpec, conorm, norm

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

__all__ = [
    "Cocycle",
    "CocycleLabError",
    "InvalidInput",
    "NumericalFailure",
    "SplittingSpec",
    "StallDetected",
    "conorm",
    "norm",
    "theta",
    "window_product",
]
