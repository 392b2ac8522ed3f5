"""Exception types shared across the toolkit.

The CLI maps these onto its exit codes: usage errors exit 1, I/O and image
format errors exit 2, validation/invariant failures exit 3, external
evaluator failures exit 4.
"""


class DctShieldError(Exception):
    """Base class for all toolkit errors."""


class UsageError(DctShieldError):
    """Bad command-line arguments."""


class ImageFormatError(DctShieldError):
    """An input image cannot be read or has an unsupported layout."""


class AlphaChannelError(ImageFormatError):
    """Input image carries an alpha channel, which the codec rejects."""


class ValidationError(DctShieldError):
    """A schema, manifest, or invariant check failed."""


class ArchiveError(ValidationError):
    """Coefficient archive is corrupted or inconsistent with the supplied config."""


class EvaluatorError(DctShieldError):
    """An external or built-in evaluator failed at a specific grid point."""

    def __init__(self, message, k=None, qs_af=None):
        super().__init__(message)
        self.k = k
        self.qs_af = qs_af
