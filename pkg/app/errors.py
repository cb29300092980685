"""
Exception hierarchy shared by the Melnikov toolkit.
"""

from typing import Any, Dict, Optional


class MelnikovError(Exception):
    """Base class for errors raised by the toolkit"""


class DomainError(MelnikovError, ValueError):
    """An argument lies outside the range where the quantity is defined"""


class SpecValidationError(MelnikovError, ValueError):
    """A perturbation spec violates its schema or case invariants"""


class QuadratureError(MelnikovError):
    """Adaptive quadrature could not reach the requested tolerance"""


class CalibrationError(MelnikovError):
    """Calibrated constants are inconsistent across the h samples"""


class DegenerateMelnikovError(MelnikovError):
    """The Melnikov function is possibly identically zero"""


class SimulationError(MelnikovError):
    """The piecewise ODE integration could not be completed"""


class OrbitEscapeError(SimulationError):
    """The orbit left the period annulus"""


class VerificationFailure(MelnikovError):
    """An oracle comparison exceeded its threshold"""

    def __init__(self, message: str, row: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.row = row or {}
