"""Exception types shared across the package."""


class IsrmError(Exception):
    pass


class DimensionMismatch(IsrmError):
    pass


class QuadratureFailure(IsrmError):
    """Numerical integration did not reach the requested tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DivergentIntegral(IsrmError):
    pass


class IntegrandBoundViolated(IsrmError):
    """A radial integrand exceeded its declared min{1, r^2} envelope.

    Signals a caller bug: the functional is outside the class integrable
    against every Levy measure.
    """


class ExprSyntaxError(IsrmError):
    def __init__(self, message, position, expected=()):
        super().__init__(f"{message} at offset {position}")
        self.position = position
        self.expected = tuple(expected)


class UnknownIdentifier(IsrmError):
    def __init__(self, name, position):
        super().__init__(f"unknown identifier {name!r} at offset {position}")
        self.name = name
        self.position = position


class EvalError(IsrmError):
    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (expression offset {position})"
        super().__init__(message)
        self.position = position


class UnsupportedLevyVariant(IsrmError):
    pass


class NotIntegrable(IsrmError):
    pass


class OverlappingPieces(IsrmError):
    pass


class PartitionMismatch(IsrmError):
    pass


class DegenerateSpec(IsrmError):
    pass


class PointMassAtZero(IsrmError):
    pass


class IndexOutOfRange(IsrmError):
    pass


class SchemaError(IsrmError):
    pass
