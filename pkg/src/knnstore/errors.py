"""Exception taxonomy shared by every module.

The service layer maps these onto HTTP status codes, the CLI onto
machine-parsable one-line errors; library callers catch them directly.
"""


class KnnStoreError(Exception):
    """Base class for all errors raised by this package."""

    code = "internal"


class InvalidArgumentError(KnnStoreError, ValueError):
    """A precondition on an argument was violated."""

    code = "invalid-argument"


class NotFoundError(KnnStoreError, LookupError):
    """A referenced record, label, or audit entry does not exist."""

    code = "not-found"


class ReadOnlyError(KnnStoreError):
    """A mutation was attempted against a read-only deployment."""

    code = "read-only"


class FormatError(KnnStoreError):
    """A file could not be parsed. ``offset`` is the failing byte offset."""

    code = "parse-error"

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnknownVersionError(FormatError):
    """The file advertises a version or dtype this build cannot read."""

    code = "unknown-version"


class CorruptionError(FormatError):
    """A snapshot failed its checksum; the payload cannot be trusted."""

    code = "corruption"


class EncoderUnavailableError(KnnStoreError):
    """No external encoder endpoint is configured."""

    code = "encoder-unconfigured"
