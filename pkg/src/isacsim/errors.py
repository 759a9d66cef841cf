"""Exception hierarchy shared by all pipeline stages."""


class IsacError(Exception):
    """Base class for every error raised by isacsim."""


class ParseError(IsacError):
    """Malformed scene, config or dump document."""


class ValidationError(IsacError):
    """A document parsed but violates a model invariant."""

    def __init__(self, message, object_id=None, field=None):
        self.object_id = object_id
        self.field = field
        where = ".".join(str(p) for p in (object_id, field) if p is not None)
        super().__init__(f"{where}: {message}" if where else message)


class UnknownObject(IsacError, KeyError):
    pass


class FrameOutOfRange(IsacError, IndexError):
    pass


class InvalidResolution(IsacError, ValueError):
    pass


class NonPositiveDistance(IsacError, ValueError):
    pass


class EvanescentRegime(IsacError, ValueError):
    """Reflection requested where mu_r * eps_r < sin^2(phi)."""


class DimensionMismatch(IsacError, ValueError):
    pass


class DimensionTooSmall(IsacError, ValueError):
    pass


class DelayOutOfRange(IsacError, ValueError):
    pass


class ZeroPilot(IsacError, ZeroDivisionError):
    pass


class QOutOfRange(IsacError, ValueError):
    pass


class EigendecompositionFailure(IsacError):
    pass


class PeakNotMaximum(IsacError, ValueError):
    pass


class EmptyInput(IsacError, ValueError):
    pass


class TruthOutOfBounds(IsacError, ValueError):
    pass


class TargetNotInList(IsacError, ValueError):
    pass


class RecordError(IsacError):
    """Base class for experiment-container failures."""


class RecordIOError(RecordError, OSError):
    pass


class ChecksumMismatch(RecordError):
    pass


class VersionUnsupported(RecordError):
    pass


class StageError(IsacError):
    """Wraps a failure with the pipeline stage it happened in."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
