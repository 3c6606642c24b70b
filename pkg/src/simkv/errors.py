"""Exception hierarchy shared by the library and the command line."""


class SimkvError(Exception):
    exit_code = 1


class ConfigurationError(SimkvError, ValueError):
    """Bad user input: dimensions, parameter ranges, config files."""

    exit_code = 2


class StabilityError(ConfigurationError):
    """lambda * dt must stay below one for the moving average to be a convex update."""


class DivergenceError(SimkvError, ArithmeticError):
    """A trajectory left the finite range."""

    exit_code = 3

    def __init__(self, message, step=None, reps=None):
        super().__init__(message)
        self.step = step
        self.reps = reps


class NumericError(SimkvError, ArithmeticError):
    exit_code = 4


class EstimationError(NumericError):
    """Not enough samples to form an estimate."""
