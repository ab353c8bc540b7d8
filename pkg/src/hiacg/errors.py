"""Exception types shared across the package."""


class HiAcgError(Exception):
    """Base class for all package errors."""


class ShapeError(HiAcgError, ValueError):
    """Array dimensions violate an operation's contract."""


class EmptyContentError(HiAcgError, ValueError):
    """Input carries no usable note content."""


class MidiParseError(HiAcgError, ValueError):
    """Malformed Standard MIDI File data.

    ``offset`` is the byte position where parsing failed.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class StateError(HiAcgError, RuntimeError):
    """Object is not in a state that permits the call."""


class ConfigError(HiAcgError, ValueError):
    """Invalid or inconsistent configuration."""
