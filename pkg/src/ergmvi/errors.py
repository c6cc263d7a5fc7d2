"""Exception hierarchy. The CLI maps every ``ErgmError`` to exit status 1."""


class ErgmError(Exception):
    """Base class for all library errors."""


class NetworkParseError(ErgmError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class NodeBoundsError(ErgmError):
    pass


class InvalidDyadError(ErgmError):
    pass


class ConfigurationError(ErgmError):
    pass


class CapacityError(ErgmError):
    pass


class NonConvergenceError(ErgmError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class DegeneracyError(ErgmError):
    pass


class FactorizationError(ErgmError):
    pass


class SaddlePointError(ErgmError):
    pass


class DivergenceError(ErgmError):
    pass


class UnderflowError(ErgmError):
    pass
