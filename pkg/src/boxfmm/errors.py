"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid plan, tree, or CLI parameters."""


class DomainError(ValueError):
    """A point lies outside the simulation box or reference cube."""


class KernelEvaluationError(ValueError):
    """A kernel returned a non-finite value; carries the offending pair."""

    def __init__(self, message, x=None, y=None, indices=None):
        super().__init__(message)
        self.x = x
        self.y = y
        self.indices = indices


class FileFormatError(ValueError):
    """A point/weight file could not be parsed; carries the line number."""

    def __init__(self, message, path=None, line=None):
        super().__init__(message)
        self.path = path
        self.line = line
