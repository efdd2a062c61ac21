"""Shared exception types."""


class AffineIQError(Exception):
    """Base class for all package errors."""


class ArgumentError(AffineIQError, ValueError):
    """An operation was called with arguments violating its preconditions."""


class DecodeError(AffineIQError):
    """An image file could not be decoded (unreadable, or unsupported format/depth)."""


class ConfigError(AffineIQError):
    """A run configuration is invalid (bad ranges, missing paths, unknown keys)."""


class UnsupportedFamilyError(ArgumentError):
    """A transform family cannot be applied to the given input (e.g. illuminant on grayscale)."""


class MetricEvaluationError(AffineIQError):
    """A metric evaluation failed.

    For external adapters the full protocol transcript is attached so the
    failure can be diagnosed without re-running the adapter.
    """

    def __init__(self, message, transcript=None, index=None):
        super().__init__(message)
        self.transcript = list(transcript) if transcript else []
        self.index = index


class InsufficientDataError(AffineIQError):
    """Not enough data points to perform a fit."""


class DegenerateScaleError(AffineIQError):
    """Normalization impossible because the input has zero range."""


class NonIdentifiableFitError(AffineIQError):
    """A psychometric fit is not identifiable; the message names the failure mode."""


class FitFailureError(AffineIQError):
    """A geometric fit did not produce a valid result (e.g. conic is not an ellipse)."""


class SetupError(AffineIQError):
    """An experiment session could not be set up (e.g. missing stimuli)."""


class ConflictError(AffineIQError):
    """An out-of-order or duplicate trial submission; no state was changed."""


class PipelineStageError(AffineIQError):
    """A pipeline stage failed; partial artifacts from earlier stages are preserved."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
