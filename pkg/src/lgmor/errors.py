"""Exception types raised across the package."""


class InvalidArgument(ValueError):
    pass


class InvalidCoefficient(ValueError):
    pass


class InvalidRegularization(ValueError):
    pass


class OutOfDomain(ValueError):
    pass


class InvalidGeometry(ValueError):
    """A mapped mesh folded (non-positive Jacobian determinant)."""

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class SolverFailure(RuntimeError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class DegenerateBasis(RuntimeError):
    pass


class DegenerateReducedSystem(RuntimeError):
    pass
