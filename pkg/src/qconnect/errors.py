"""Exception hierarchy shared by every module."""


class QConnectError(Exception):
    """Base class for all errors raised by qconnect."""


class DanglingEndpoint(QConnectError, ValueError):
    pass


class DuplicateId(QConnectError, ValueError):
    pass


class UnknownArrow(QConnectError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class CycleDetected(QConnectError, ValueError):
    pass


class NotATree(QConnectError, ValueError):
    pass


class InvalidPath(QConnectError, ValueError):
    pass


class DegreeOverflow(QConnectError, ValueError):
    pass


class ShapeMismatch(QConnectError, ValueError):
    pass


class OutOfDomain(QConnectError, ValueError):
    pass


class NonConstantRank(QConnectError):
    """A morphism or path morphism changes rank over the base.

    ``path`` names the offending path (or arrow) and ``witness`` holds the
    coordinates of grid points where the rank deviates.
    """

    def __init__(self, message, path=None, witness=None):
        super().__init__(message)
        self.path = path
        self.witness = [] if witness is None else list(witness)


class FrameContinuationFailure(QConnectError):
    pass


class NotNested(QConnectError, ValueError):
    pass


class IntersectionDegeneracy(QConnectError):
    def __init__(self, message, vertex=None):
        super().__init__(message)
        self.vertex = vertex


class NotFlat(QConnectError):
    pass


class NoRealLogarithm(QConnectError, ValueError):
    pass


class IntertwiningViolation(QConnectError, ValueError):
    pass
