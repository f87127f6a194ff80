"""Exception hierarchy for the report engine."""


class CTReportError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(CTReportError):
    """Malformed binary or text input.

    ``offset`` is the byte offset at which parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class UnsupportedFormat(CTReportError):
    """File is structurally valid but uses a feature we do not decode."""


class DimensionError(CTReportError):
    """Image is not a 3D volume."""


class IoError(CTReportError):
    """Filesystem read/write failure."""


class EmptyInput(CTReportError):
    """Operation requires a non-empty mask or point set."""


class EmptyMask(EmptyInput):
    pass


class EmptyInstance(EmptyInput):
    pass


class DegenerateCloud(CTReportError):
    """All points coincide; principal axis undefined."""


class SubsegmentationUnavailable(CTReportError):
    """No SMA landmark available, head/body boundary cannot be derived."""


class UnknownOrgan(CTReportError):
    pass


class MissingSpleen(CTReportError):
    pass


class SpleenAttenuationNonpositive(CTReportError):
    """Pancreas-to-spleen ratio undefined for non-positive spleen HU."""


class MissingMeasurement(CTReportError):
    pass


class ShapeOutOfBounds(CTReportError):
    """Phantom shape does not fit the requested grid."""


class SchemaError(CTReportError):
    """Report JSON violates the schema.

    ``pointer`` is a JSON pointer to the offending element.
    """

    def __init__(self, message, pointer=""):
        self.pointer = pointer
        super().__init__(f"{message} at {pointer!r}" if pointer else message)


class LabelParseError(ParseError):
    """Tumor-presence label string could not be parsed.

    ``missing`` lists organ keys absent from the answer.
    """

    def __init__(self, message, missing=()):
        self.missing = tuple(missing)
        super().__init__(message)


class LengthMismatch(CTReportError):
    pass


class ChatError(CTReportError):
    """Base for chat-completion client failures."""


class Timeout(ChatError):
    pass


class HttpError(ChatError):
    def __init__(self, status, message=""):
        self.status = status
        super().__init__(message or f"HTTP {status}")


class MalformedResponse(ChatError):
    pass


class MarkersMissing(CTReportError):
    """Completion does not contain the #start/#end marker pair."""


class EmptyStructuredReport(CTReportError):
    pass
