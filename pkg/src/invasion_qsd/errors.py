"""Exception types shared across the package."""


class ConvergenceError(RuntimeError):
    """An iterative numerical method hit its iteration cap."""


class SizeCapError(ValueError):
    """A requested problem exceeds a configured size cap."""
