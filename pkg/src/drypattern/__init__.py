"""Far-from-equilibrium vegetation patterns in a scaled dryland model.

Subpackages cover parameter scaling, the fast layer, the slow flows, uniform
states, singular orbit construction, a direct PDE stepper and a command line.
"""
from .errors import DomainError, DrypatternError, NumericalError, ParameterError, RegimeError
from .params import ScaledParams, SlowPlusCoeffs, UnscaledParams, derive_coeffs, scale_params

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "DrypatternError",
    "NumericalError",
    "ParameterError",
    "RegimeError",
    "ScaledParams",
    "SlowPlusCoeffs",
    "UnscaledParams",
    "derive_coeffs",
    "scale_params",
    "__version__",
]
