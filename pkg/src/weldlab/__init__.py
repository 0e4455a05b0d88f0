"""Simulation and verification lab for critical (gamma = 2) LQG conformal welding."""

from weldlab.errors import (
    DegenerateCorrespondence,
    InvalidCurve,
    NumericFailure,
    OutOfRange,
    RangeExhausted,
    SwallowedPoint,
)
from weldlab.rng import RngStream

__version__ = "0.1.0"

__all__ = [
    "DegenerateCorrespondence",
    "InvalidCurve",
    "NumericFailure",
    "OutOfRange",
    "RangeExhausted",
    "RngStream",
    "SwallowedPoint",
]
