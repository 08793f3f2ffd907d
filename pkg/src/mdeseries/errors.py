"""Exception and warning types shared across the package."""


class MdeError(Exception):
    """Base class for all package errors."""


class ValidationError(MdeError, ValueError):
    """Invalid input: bad parameters, malformed files, out-of-range indices."""


class ResourceLimitError(MdeError):
    """A documented size guard was exceeded (tree order, brute-force labellings)."""


class StructureError(MdeError):
    """An internal structural invariant was violated (treated as a bug)."""


class NumericalError(MdeError):
    """A numerical procedure failed (non-convergence, singular updates)."""


class ConvergenceError(NumericalError):
    """Fixed-point iteration did not reach the tolerance.

    Attributes
    ----------
    history : list of float
        Fixed-point defect recorded at every iteration.
    """

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class SeriesDivergenceWarning(RuntimeWarning):
    """Laurent terms stopped decreasing; the truncation is not trustworthy."""
