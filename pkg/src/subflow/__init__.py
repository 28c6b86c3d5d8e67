"""Suspension flows over substitution systems: spectral estimates and Hölder certificates."""
from __future__ import annotations

from .errors import (AssumptionViolation, ConfigError, NumericFailure, SubflowError)
from .perron import EigenSystem, eigen_system, param_point, vandermonde_constants
from .substitution import (Substitution, apply_power, find_return_word, parse_substitution,
                           prefix_orbit, substitution_matrix, validate_assumptions)
from .suspension import CylFunction, Orbit, RoofVector, TwistedIntegrator, twisted_birkhoff

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolation", "ConfigError", "NumericFailure", "SubflowError",
    "EigenSystem", "eigen_system", "param_point", "vandermonde_constants",
    "Substitution", "apply_power", "find_return_word", "parse_substitution",
    "prefix_orbit", "substitution_matrix", "validate_assumptions",
    "CylFunction", "Orbit", "RoofVector", "TwistedIntegrator", "twisted_birkhoff",
]
