"""Exception types shared across the package."""


class ModelError(ValueError):
    """Invalid model definition or input outside a model's domain."""


class AssumptionViolation(ModelError):
    """A model fails monotonicity/convexity checks on action space."""


class NumericalFailure(ArithmeticError):
    """Base class for failures the CLI maps to exit status 3."""


class ConvergenceError(NumericalFailure):
    pass


class NodalCountOverflow(NumericalFailure, OverflowError):
    """A nodal count does not fit into a signed 64-bit integer."""
