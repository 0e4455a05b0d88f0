"""Exception types.

Invalid arguments raise plain ``ValueError``; the classes below cover the
failure modes that callers may want to catch separately.
"""


class NumericFailure(ArithmeticError):
    """A factorization or iterative solve did not succeed."""


class OutOfRange(ValueError):
    """A requested quantile or mass exceeds what the measure holds."""


class RangeExhausted(ValueError):
    """A search (crossing time, normalizing radius) left the sampled range."""


class SwallowedPoint(ValueError):
    """The point was absorbed by the hull before the requested time."""


class InvalidCurve(ValueError):
    """A polyline is not a simple curve in the upper half-plane from 0."""


class DegenerateCorrespondence(ValueError):
    """Welding images collided numerically."""


# numerical failure modes a replica may hit on an unlucky field
REPLICA_FAILURES = (NumericFailure, OutOfRange, RangeExhausted, SwallowedPoint, InvalidCurve, DegenerateCorrespondence)
