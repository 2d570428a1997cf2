"""Exception types raised across the package."""


class GFSVGDError(Exception):
    """Base class for all package errors."""


class DimensionError(GFSVGDError, ValueError):
    """Input point dimension does not match the model dimension."""


class ScoreUnavailableError(GFSVGDError):
    """The density has no analytic score function."""


class NoExactSamplerError(GFSVGDError):
    """The density cannot be sampled exactly."""


class ConfigError(GFSVGDError, ValueError):
    """Invalid experiment configuration.

    ``line`` is the 1-based line in the source file when it is known.
    """

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class NumericalAbort(GFSVGDError, FloatingPointError):
    """A run produced non-finite values and was stopped."""

    def __init__(self, message, iteration=None, index=None):
        self.iteration = iteration
        self.index = index
        parts = [message]
        if iteration is not None:
            parts.append(f"iteration={iteration}")
        if index is not None:
            parts.append(f"particle={index}")
        super().__init__(", ".join(parts))
