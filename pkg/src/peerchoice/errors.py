"""Exception hierarchy. Each class carries the CLI exit code it maps to."""

from enum import IntEnum


class ExitCode(IntEnum):
    OK = 0
    VALIDATION = 3
    IDENTIFICATION = 4
    NUMERIC = 5
    IO = 6
    TOLERANCE = 7


class PeerChoiceError(Exception):
    exit_code = ExitCode.NUMERIC


class ValidationError(PeerChoiceError, ValueError):
    """Malformed model, scenario or argument."""
    exit_code = ExitCode.VALIDATION


class DomainError(ValidationError):
    """Input outside the domain of a mathematical operation."""


class GridLookupError(DomainError, KeyError):
    """Tabular choice rule queried off its peer-average grid."""

    def __str__(self):
        return Exception.__str__(self)


class EnumerationTooLargeError(ValidationError):
    pass


class StateSpaceTooLargeError(ValidationError):
    pass


class RatesRequiredError(ValidationError):
    pass


class NonUniqueEquilibriumError(PeerChoiceError):
    exit_code = ExitCode.NUMERIC


class IdentificationError(PeerChoiceError):
    exit_code = ExitCode.IDENTIFICATION


class MissingCellError(IdentificationError):
    """Required CCP cells (or transition rows) were never observed."""

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = list(missing)


class InfeasibleRatioError(IdentificationError):
    def __init__(self, message, ratio=None, interval=None):
        super().__init__(message)
        self.ratio = ratio
        self.interval = interval


class InsufficientContrastError(IdentificationError):
    pass


class AssumptionViolationError(IdentificationError):
    pass


class RecursionBlockedError(IdentificationError):
    def __init__(self, message, size=None, own=None, counts=None):
        super().__init__(message)
        self.size = size
        self.own = own
        self.counts = counts


class EmbeddingNotIdentifiedError(IdentificationError):
    def __init__(self, message, pairs=()):
        super().__init__(message)
        self.pairs = list(pairs)
