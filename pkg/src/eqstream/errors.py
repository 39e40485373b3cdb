"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class EqsError(Exception):
    exit_code = 1


class ParseError(EqsError):
    """Malformed input file (event file, frame manifest, image)."""

    exit_code = 2

    def __init__(self, message, offset=None, unit="line"):
        if offset is not None:
            message = f"{message} (at {unit} {offset})"
        super().__init__(message)
        self.offset = offset


class ValidationError(EqsError):
    """Data is well-formed but inconsistent (geometry mismatch, bounds)."""

    exit_code = 2


class ConfigError(EqsError, ValueError):
    exit_code = 3


class FormatError(EqsError):
    """Weight file magic/version/shape/hash problems."""

    exit_code = 4


class ContextError(EqsError, RuntimeError):
    """Backward pass requested without a retained forward context."""
