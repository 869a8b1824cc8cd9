"""Exception hierarchy shared by every module.

``DataError`` subclasses signal problems with the inputs (bad files, unusable
corpora, degenerate batches); the CLI maps them to exit code 2.
"""


class ArhateError(Exception):
    """Base class for all library errors."""


class DataError(ArhateError, ValueError):
    """The inputs cannot be processed as given."""


class MalformedRow(DataError):
    pass


class UnknownLabel(DataError):
    pass


class DuplicateId(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class InsufficientNegatives(DataError):
    pass


class SingleClassCorpus(DataError):
    pass


class InsufficientPool(DataError):
    def __init__(self, pool: str, needed: int, available: int):
        super().__init__(f"pool {pool!r} has {available} pairs, {needed} requested")
        self.pool = pool
        self.needed = needed
        self.available = available


class DimensionMismatch(DataError):
    pass


class UnsupportedVersion(DataError):
    pass


class CorruptCheckpoint(DataError):
    pass


class ZeroVector(DataError):
    pass


class IndexOutOfRange(DataError, IndexError):
    pass


class MissingClassPairs(DataError):
    pass


class NoValidTriplet(DataError):
    pass


class ObjectiveDataMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class EmptyInput(DataError):
    pass


class HeterogeneousHeads(DataError):
    pass


class DegenerateData(DataError):
    pass
