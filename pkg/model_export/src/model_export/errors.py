"""Exception types shared across the export tool.

Every error raised on a user-facing path derives from ExportError so callers
can catch one base class at the CLI boundary.
"""


class ExportError(Exception):
    """Base class for all exporter-specific errors."""


class UnsupportedBackboneError(ExportError):
    """The requested backbone id is not in the registry."""


class CheckpointUnavailableError(ExportError):
    """A hub checkpoint could not be fetched (typically: no network access)."""


class IntegrityError(ExportError):
    """Files on disk disagree with the hashes recorded for them."""


class ModelDirError(ExportError):
    """A model directory is missing files or a graph fails to deserialize."""


class ProbeError(ExportError):
    """A probe file is missing, malformed, or inconsistent with its model."""


class MissingDependencyError(ExportError):
    """An optional package needed for this operation is not installed."""
