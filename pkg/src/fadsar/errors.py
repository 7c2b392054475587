"""Exception hierarchy shared across the toolkit.

The CLI maps the three top-level families (IO, schema, config) onto distinct
exit codes, so every concrete error derives from exactly one of them.
"""


class FadsarError(Exception):
    """Base class for all toolkit errors."""


class SceneIOError(FadsarError, OSError):
    """A referenced file is missing or unreadable."""


class SchemaError(FadsarError, ValueError):
    """Input content does not match the expected format or invariants."""


class ConfigError(FadsarError, ValueError):
    """A configuration value violates its invariant."""


class UnsupportedFormat(SchemaError):
    pass


class ChannelDimensionMismatch(SchemaError):
    pass


class CsvSchemaError(SchemaError):
    """A required CSV column is missing."""


class RowParseError(SchemaError):
    """A CSV data row could not be parsed; ``row`` is 1-based over data rows."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class AmbiguousLabel(SchemaError):
    """Vessel/fishing flags do not determine a class."""


class SpecError(ConfigError):
    """A synthetic scene spec cannot be realised."""


class Degenerate(FadsarError):
    """A channel has no valid cells or a single repeated value."""


class MissingAuxiliary(FadsarError):
    def __init__(self, name: str):
        super().__init__(f"auxiliary channel {name!r} not present in scene")
        self.name = name


class CenterOutsidePatch(FadsarError, ValueError):
    pass
