"""Exception types raised by the solver."""


class QnschError(Exception):
    """Base class for all solver errors."""


class InvalidArgument(QnschError, ValueError):
    pass


class NotFound(QnschError, LookupError):
    pass


class NumericalFailure(QnschError, ArithmeticError):
    pass


class NonConvergence(NumericalFailure):
    """Picard loop hit its iteration cap; ``stats`` holds the last StepStats."""

    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats


class UndefinedDiagnostic(QnschError, ArithmeticError):
    pass


class ConfigError(QnschError, ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class IOFailure(QnschError, OSError):
    """Reading or writing a file failed; ``path`` names the file."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path
