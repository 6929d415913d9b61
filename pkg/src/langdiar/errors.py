"""Exception types raised across the toolkit.

Everything derives from :class:`DiarError` so callers (the CLI in
particular) can separate data problems from programming errors.
"""


class DiarError(Exception):
    """Base class for toolkit errors."""


class FormatError(DiarError, ValueError):
    """Malformed input file or record."""


class ParseError(FormatError):
    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        if path is not None and lineno is not None:
            message = f"{path}:{lineno}: {message}"
        elif lineno is not None:
            message = f"line {lineno}: {message}"
        elif path is not None:
            message = f"{path}: {message}"
        super().__init__(message)


class UnsupportedChannelError(FormatError):
    """Audio with more than one channel."""


class EmptyInputError(DiarError, ValueError):
    """An input that must be non-empty was empty."""


class TooShortError(DiarError, ValueError):
    """Input too short for the requested window/frame geometry."""


class ConfigError(DiarError, ValueError):
    """Invalid parameter combination."""


class ShapeError(DiarError, ValueError):
    """Array shapes/lengths do not agree."""


class DegenerateClassError(DiarError, ValueError):
    """A class has too few samples to estimate its statistics."""


class UndefinedMetricError(DiarError, ValueError):
    """The metric has no defined value for this input (e.g. no reference speech)."""


class InsufficientAudioError(DiarError):
    """A source pool cannot supply the requested amount of audio."""
