"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes: parameter/validation/protocol
problems exit 2, data/format problems exit 3, numeric failures exit 4.
"""


class BounceError(Exception):
    """Base class for every error raised by this package."""


class FormatError(BounceError):
    """A file or byte stream does not match its declared container format."""


class UnsupportedFormatError(FormatError):
    """The container is well formed but uses an encoding we do not handle."""


class EmptyDataError(FormatError):
    """A container parsed fine but carries no payload."""


class ValidationError(BounceError):
    """Input content failed validation (labels, references, header fields)."""


class ParameterError(BounceError):
    """A parameter value or input shape violates an operation's contract."""


class DataError(BounceError):
    """A dataset cannot support the requested operation."""


class NumericError(BounceError):
    """A numeric computation produced non-finite values."""


class ProtocolError(BounceError):
    """Streaming frames violated the framing contract (order or length)."""
