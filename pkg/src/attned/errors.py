"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: configuration/usage problems
exit 1, data problems exit 2, numerical problems exit 3.
"""


class AttnEdError(Exception):
    """Base class for all package errors."""


class ConfigError(AttnEdError):
    """Invalid configuration value or combination (exit code 1)."""


class DataError(AttnEdError):
    """Malformed, inconsistent, or missing data (exit code 2)."""


class SchemaError(DataError):
    """CSV header does not match the expected schema."""


class RowError(DataError):
    """A data row failed to parse; carries the 1-based line number."""

    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


class OrderingError(DataError):
    """Input violates a required sort order."""


class ImputationError(DataError):
    """A participant has no observed values for a feature."""


class ProtocolError(DataError):
    """An evaluation or explanation protocol constraint was violated."""


class CheckpointError(DataError):
    """A checkpoint file is corrupt, truncated, or version-incompatible."""


class DimensionError(AttnEdError):
    """Array shapes are inconsistent (exit code 3)."""


class NumericError(AttnEdError):
    """Non-finite values or a numerically failed computation (exit code 3)."""
