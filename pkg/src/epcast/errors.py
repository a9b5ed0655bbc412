"""Exception hierarchy shared across the package."""


class EpcastError(Exception):
    """Base class for every error raised by this package."""


class InvalidParams(EpcastError, ValueError):
    pass


class NonFiniteState(EpcastError, ArithmeticError):
    pass


class OutOfHorizon(EpcastError, ValueError):
    pass


class InvalidRequest(EpcastError, ValueError):
    pass


class SolverFailure(EpcastError):
    pass


class ParseError(EpcastError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyTrace(EpcastError, ValueError):
    pass


class InvalidTarget(EpcastError, ValueError):
    pass


class DeadlineTooShort(EpcastError, ValueError):
    pass


class MissingSnapshot(EpcastError, RuntimeError):
    pass


class UnknownMessage(EpcastError, KeyError):
    pass


class InsufficientReplications(EpcastError, ValueError):
    pass


class ConfigError(EpcastError, ValueError):
    pass


class TraceError(EpcastError):
    pass
