"""Exception types shared across pipeline stages."""


class NeedFinderError(Exception):
    """Base class for pipeline errors."""


class MalformedInputError(NeedFinderError, ValueError):
    """Input file or config does not match its schema."""


class UntrainableError(NeedFinderError):
    """A day (or baseline window) lacks positive or negative instances."""


class TrainingDivergedError(NeedFinderError, ArithmeticError):
    """Gradient descent produced a non-finite loss."""
