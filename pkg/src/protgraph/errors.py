"""Exception hierarchy.

Every failure raised by the toolkit derives from :class:`ProtGraphError` so
callers (and the CLI) can separate data problems from programming errors.
"""


class ProtGraphError(ValueError):
    pass


# parsing / ingest
class MalformedRecord(ProtGraphError):
    pass


class EmptyStructure(ProtGraphError):
    pass


class NonTriangleFace(ProtGraphError):
    pass


class IndexOutOfRange(ProtGraphError):
    pass


class BadCountsLine(ProtGraphError):
    pass


class UnknownElement(ProtGraphError):
    pass


class DuplicateBond(ProtGraphError):
    pass


class MissingColumn(ProtGraphError):
    pass


class DuplicateId(ProtGraphError):
    pass


class SchemaVersionMismatch(ProtGraphError):
    pass


class ChecksumMismatch(ProtGraphError):
    pass


class InvalidGraph(ProtGraphError):
    pass


# geometry / features
class UnknownVdwRadius(ProtGraphError):
    pass


class ZeroAreaFace(ProtGraphError):
    pass


# segmentation
class DimensionMismatch(ProtGraphError):
    pass


class ZeroTotalWeight(ProtGraphError):
    pass


class DisconnectedInput(ProtGraphError):
    pass


class EmptySample(ProtGraphError):
    pass


class EmptyLayer(ProtGraphError):
    pass


# learning
class ShapeMismatch(ProtGraphError):
    pass


class NonFiniteError(ProtGraphError, FloatingPointError):
    pass


class LengthMismatch(ProtGraphError):
    pass


class EmptySplit(ProtGraphError):
    pass
