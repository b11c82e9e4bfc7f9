"""Exception hierarchy for synthtrace.

Library code raises these; only the CLI turns them into exit codes.
"""


class SynthTraceError(Exception):
    """Base class for every error raised by synthtrace."""


class ValidationError(SynthTraceError, ValueError):
    """Input data or parameters violate a documented precondition."""


class ManifestError(ValidationError):
    """Malformed dataset manifest CSV."""


class ScoreFileError(ValidationError):
    """Malformed score CSV."""


class ShapeError(ValidationError):
    """Array shapes that must agree do not."""


class ImageDecodeError(SynthTraceError):
    """An image file could not be read or decoded."""


class ModelFormatError(SynthTraceError):
    """A detector model file has the wrong magic, version or content."""


class TrainingError(SynthTraceError):
    """Training diverged (non-finite loss)."""
