"""Invisibility thresholds and sensitivity orderings for image-quality metrics
under affine transformations, plus a 2AFC experiment service."""

__version__ = "0.1.0"
