"""Exception hierarchy shared across the framework."""


class FedGraphError(Exception):
    """Base class for all framework errors."""


class DimensionMismatch(FedGraphError):
    pass


class IndexOutOfRange(FedGraphError):
    pass


class NonFiniteFeature(FedGraphError):
    pass


class EmptySet(FedGraphError):
    pass


class EmptyGraph(FedGraphError):
    pass


class EmptySegment(FedGraphError):
    pass


class InvalidRate(FedGraphError):
    pass


class HeadDivisibility(FedGraphError):
    pass


class AllLabelsMasked(FedGraphError):
    pass


class EmptyDataset(FedGraphError):
    pass


class InvalidAlpha(FedGraphError):
    pass


class MoreClientsThanSamples(FedGraphError):
    pass


class MissingCategory(FedGraphError):
    pass


class TooManyEgos(FedGraphError):
    pass


class EmptyShard(FedGraphError):
    pass


class EmptyUpdateSet(FedGraphError):
    pass


class LayoutMismatch(FedGraphError):
    pass


class InvalidCount(FedGraphError):
    pass


class TransportFailure(FedGraphError):
    pass


class InsufficientShares(FedGraphError):
    pass


class DuplicateEvaluationPoint(FedGraphError):
    pass


class InsufficientSurvivors(FedGraphError):
    pass


class DropoutUnsupported(FedGraphError):
    pass


class UnknownParticipant(FedGraphError):
    pass


class Timeout(FedGraphError):
    pass


class ConnectionClosed(FedGraphError):
    pass


class TruncatedFrame(FedGraphError):
    pass


class UnknownType(FedGraphError):
    pass


class LengthMismatch(FedGraphError):
    pass


class CorruptHeader(FedGraphError):
    pass


class ParseError(FedGraphError):
    pass


class SchemaViolation(FedGraphError):
    pass


class SingleClass(FedGraphError):
    pass


class EmptyInput(FedGraphError):
    pass


class InvalidParams(FedGraphError):
    pass


class ConfigError(FedGraphError):
    """Invalid or inconsistent run configuration; names the offending key."""
