class SgswarmError(Exception):
    """Base class for every error raised by the project."""


class ConfigError(SgswarmError, ValueError):
    """A JSON config failed validation; the message names each offending key."""
