"""Exception hierarchy shared by all modules."""


class MultirateError(Exception):
    """Base class for errors raised by this package."""


class InvalidMesh(MultirateError, ValueError):
    pass


class ConstraintViolation(MultirateError, ValueError):
    """A macro step refines both subproblems at once."""


class CannotPromote(MultirateError, ValueError):
    pass


class MeshMismatch(MultirateError, ValueError):
    pass


class MeshSizeError(MultirateError, ValueError):
    pass


class IterationDiverged(MultirateError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class MissingExact(MultirateError, ValueError):
    pass


class SingularMatrix(MultirateError, ArithmeticError):
    pass


class ConfigError(MultirateError, ValueError):
    pass
