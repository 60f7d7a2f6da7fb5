"""Pekar-Tomasevich multipolarons in a constant magnetic field.

Grid discretization of the N-polaron energy functional, a
linearize-then-minimize self-consistent solver, binding-energy tables and
numerical checks of the localization and multipole estimates used in the
binding argument.
"""

__version__ = "0.1.0"

from .errors import ConfigurationError, NumericalError, PekarError, UsageError
from .grid import Grid3D, MagneticGauge

__all__ = [
    "__version__",
    "ConfigurationError",
    "Grid3D",
    "MagneticGauge",
    "NumericalError",
    "PekarError",
    "UsageError",
]
