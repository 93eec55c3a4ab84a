"""Exception types shared across the toolkit."""


class HapticAuthError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(HapticAuthError, ValueError):
    """Invalid configuration or parameter value (CLI exit code 2)."""


class DataError(HapticAuthError, ValueError):
    """Invalid data, file, or experiment protocol violation (CLI exit code 3)."""


class SchemaError(DataError):
    """File content does not match the expected schema."""


class TraceOrderingError(DataError):
    """Timestamps within a trace are not strictly increasing."""


class EmptyTraceError(DataError):
    """A trace contains no samples."""


class ShapeError(HapticAuthError, ValueError):
    """Array shape or length incompatible with the requested operation."""
