"""Exception types raised by the library."""


class TasepError(Exception):
    pass


class InvalidInputError(TasepError, ValueError):
    """Malformed parameters, indices or states."""


class ConsistencyError(TasepError):
    """A correlation vector violates the consistency equations beyond tolerance."""


class SingularSystemError(TasepError):
    """A linear solve met more rank deficiency than the problem allows."""


class IntegrationError(TasepError):
    """Time integration failed.

    The last accepted time and state are kept on the exception so callers
    can inspect how far the trajectory got.
    """

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state
