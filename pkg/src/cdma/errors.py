"""Exception hierarchy shared by the library and the CLI."""


class CdmaError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CdmaError, ValueError):
    """Invalid configuration (window size, clock, bandwidth, ...)."""


class InvalidInputError(CdmaError, ValueError):
    """Argument outside the operation's domain."""


class CorruptStreamError(CdmaError, ValueError):
    """Compressed payload does not decode to a well-formed result."""


class FormatError(CorruptStreamError):
    """File container is malformed (magic, version, sizes)."""
