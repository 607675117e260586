"""Exception hierarchy. Every error the library raises derives from ``CoarseForgeError``."""


class CoarseForgeError(Exception):
    """Base class."""


class InputError(CoarseForgeError, ValueError):
    """Malformed user input (JSON documents, rationals, CLI values)."""


class ScaleOverflow(CoarseForgeError, OverflowError):
    """An exact table would not fit in int64 numerators."""


class DomainExceeded(CoarseForgeError):
    pass


class NotProper(CoarseForgeError):
    pass


class UnknownPoint(CoarseForgeError, KeyError):
    pass


class EmptyInnerWindow(CoarseForgeError):
    pass


class EmptyWindow(CoarseForgeError):
    pass


class InfiniteDistance(CoarseForgeError):
    pass


class WeightBelowOne(CoarseForgeError):
    pass


class HypothesisUnverified(CoarseForgeError):
    pass


class NotConnected(CoarseForgeError):
    pass


class MismatchedSpaces(CoarseForgeError):
    pass


class ProductTooLarge(CoarseForgeError):
    pass


class Overflow(CoarseForgeError):
    """Tuple enumeration exceeded its search budget."""


class EmptyTupleSpace(CoarseForgeError):
    pass


class KappaTooSmall(CoarseForgeError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class PreconditionReplayFailed(CoarseForgeError):
    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class CandidateNotCoarselyEquivalent(CoarseForgeError):
    pass


class UnknownDemo(CoarseForgeError, KeyError):
    pass


class InexactValue(DomainExceeded):
    """The requested value is irrational (e.g. an exponential at a non-integer)."""
