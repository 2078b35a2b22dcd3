"""Exception hierarchy shared across the pipeline."""


class KgdialError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(KgdialError):
    """Invalid or inconsistent configuration."""


class DataError(KgdialError):
    """Malformed or inconsistent input data files."""


class BackendError(KgdialError):
    """A scoring or generation backend failed."""


class TransportError(BackendError):
    """Could not reach a remote backend (after retries)."""


class ProtocolError(BackendError):
    """A remote backend answered, but not with the documented wire format."""
