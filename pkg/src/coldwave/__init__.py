"""Numerical lab for the 1-D relativistic cold-plasma upper-hybrid oscillation model."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    DerivativeState,
    Family,
    FieldState,
    FirstIntegrals,
    InitialData,
    InitialDataError,
    SimConfig,
    ValidationError,
    criterion_nonrel,
    criterion_rel_smallamp,
    first_integrals,
    make_initial_data,
    small_perturbation_data,
)
from .characteristics import BACKEND, CharacteristicTrace, ensemble, integrate  # noqa: E402

__all__ = [
    "BACKEND",
    "CharacteristicTrace",
    "DerivativeState",
    "Family",
    "FieldState",
    "FirstIntegrals",
    "InitialData",
    "InitialDataError",
    "SimConfig",
    "ValidationError",
    "criterion_nonrel",
    "criterion_rel_smallamp",
    "ensemble",
    "first_integrals",
    "integrate",
    "make_initial_data",
    "small_perturbation_data",
]
