"""Numerical toolkit for sphere-plate Casimir force differences.

Imaginary-axis permittivities, the Lifshitz force in the proximity-force
form, roughness averaging, electrostatic calibration and the statistical
comparison of theory with repeated force scans.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CasimirError,
    CatalogLookupError,
    ConfigError,
    ConvergenceError,
    DataFormatError,
    DomainError,
    FitError,
    GridMismatchError,
    InstabilityError,
)
from .lifshitz import (  # noqa: E402
    ForceCurve,
    QuadratureSpec,
    SpherePlateGeometry,
    difference_force,
    ideal_metal_force,
    lifshitz_force,
)
from .materials import drude_from_carriers, eps_imag_axis, get_model, kk_transform  # noqa: E402

__all__ = [
    "__version__", "CasimirError", "CatalogLookupError", "ConfigError", "ConvergenceError",
    "DataFormatError", "DomainError", "FitError", "GridMismatchError", "InstabilityError",
    "ForceCurve", "QuadratureSpec", "SpherePlateGeometry", "difference_force", "ideal_metal_force",
    "lifshitz_force", "drude_from_carriers", "eps_imag_axis", "get_model", "kk_transform",
]
