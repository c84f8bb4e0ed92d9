"""Exception types shared across the package.

Every error raised on a user-facing path derives from GuidedCropError so
callers can catch one base class at the CLI boundary.
"""


class GuidedCropError(Exception):
    """Base class for all package-specific errors."""


class InvalidBoxError(GuidedCropError):
    """Box coordinates are malformed (min > max, non-finite, negative span)."""


class InvalidCropError(GuidedCropError):
    """A crop request degenerated to zero pixels or fell outside the image."""


class NoObjectError(GuidedCropError):
    """An annotation mask contains no labelled pixels."""


class InvalidParameterError(GuidedCropError):
    """A configuration value violates its documented range."""


class DegeneratePromptError(GuidedCropError):
    """Prompt embeddings cancelled out; no usable class vector remains."""


class ModelLoadError(GuidedCropError):
    """A model directory is missing files or a graph fails to deserialize."""


class InvalidModelError(GuidedCropError):
    """A loaded graph disagrees with its manifest (shapes, dimensions)."""


class BackendError(GuidedCropError):
    """A backend call failed for a specific sample."""


class UnknownImageError(BackendError):
    """The backend has no scene or file for the requested image reference."""
