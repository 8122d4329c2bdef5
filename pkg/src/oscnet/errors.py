"""Exception hierarchy shared by the simulator, the loop-design tools and the CLI."""


class OscnetError(Exception):
    """Base class for all package errors."""


class DomainError(OscnetError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class ConfigError(OscnetError, ValueError):
    """Invalid or inconsistent configuration."""

    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        prefix = ""
        if line is not None:
            prefix = f"line {line}: "
        elif key is not None:
            prefix = f"{key}: "
        super().__init__(prefix + message)


class OutOfWindowError(OscnetError, LookupError):
    """A history lookup reached further back than the buffer retains."""


class NumericalError(OscnetError, ArithmeticError):
    """An iterative solver failed to converge."""


class DivergenceError(NumericalError):
    """The integrated state became non-finite or exceeded its rate guard."""

    def __init__(self, message, time=None):
        self.time = time
        if time is not None:
            message = f"{message} (t = {time:.6g} s)"
        super().__init__(message)


class DesignError(OscnetError, ValueError):
    """Loop design targets cannot be met."""


class AnalysisError(OscnetError, ArithmeticError):
    """A frequency- or time-domain analysis has no valid answer."""
