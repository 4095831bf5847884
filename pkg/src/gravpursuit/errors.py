"""Exception types shared across the package."""


class InputError(ValueError):
    """Raised when an argument violates a documented precondition."""


class ParseError(ValueError):
    """Raised when a coefficient file cannot be parsed.

    The offending line number is kept in ``lineno``.
    """

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class SolverError(RuntimeError):
    """Raised when a greedy solver meets non-finite values."""

    def __init__(self, message, iteration=None):
        self.iteration = iteration
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)
