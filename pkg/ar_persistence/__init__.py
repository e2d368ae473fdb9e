"""Persistence probabilities of Gaussian auto-regressive processes."""

from ar_persistence.errors import ArPersistenceError, NumericalError, PreconditionError
from ar_persistence.polyalg import GeneratingPolynomial, ZeroSet, find_roots, spectral_summary
from ar_persistence.regime import Regime, RegimeTag, classify, classify_zeros

__all__ = [
    "ArPersistenceError",
    "GeneratingPolynomial",
    "NumericalError",
    "PreconditionError",
    "Regime",
    "RegimeTag",
    "ZeroSet",
    "classify",
    "classify_zeros",
    "find_roots",
    "spectral_summary",
]

__version__ = "0.1.0"
