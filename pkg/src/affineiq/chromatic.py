"""Chromatic discrimination: radial thresholds, fixed-center ellipse fits,
and radial RMSE comparison between ellipses.

Thresholds along radial hue directions away from the white center form a
two-dimensional invisibility region, summarized by a conic fitted with the
center held fixed: A u^2 + B uv + C v^2 = 1 in centered coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ArgumentError, FitFailureError, InsufficientDataError
from .imaging import WHITE_E, Chromaticity
from .transduction import (
    EqualizationFit,
    ResponseCurve,
    first_crossing,
    isotonic_nondecreasing,
    transduce,
)

OUTLINE_SAMPLES = 360


@dataclass(frozen=True)
class Ellipse:
    center: Chromaticity
    semi_major: float
    semi_minor: float
    angle: float  # radians of the major axis from the x axis, in [0, pi)

    def __post_init__(self):
        if not (self.semi_major >= self.semi_minor > 0):
            raise ArgumentError("require semi_major >= semi_minor > 0")
        a = math.fmod(self.angle, math.pi)
        if a < 0:
            a += math.pi
        object.__setattr__(self, "angle", a)


@dataclass(frozen=True)
class EllipseFitResult:
    ellipse: Ellipse
    residual: float  # RMS radial misfit of the input points
    n_points: int


def radial_threshold_points(
    directions: Sequence[tuple[float, float]],
    thresholds: Sequence[float],
    center: Chromaticity | tuple[float, float] = WHITE_E,
) -> list[Chromaticity]:
    """Threshold points center + r * direction, one per measured hue direction."""
    if isinstance(center, Chromaticity):
        cx, cy = center.x, center.y
    else:
        cx, cy = center
    if len(directions) != len(thresholds):
        raise ArgumentError("directions and thresholds must pair up")
    if len(directions) < 4:
        raise InsufficientDataError(
            "need >= 4 directions: a fixed-center ellipse is underdetermined below that"
        )
    seen = set()
    points = []
    for (dx, dy), r in zip(directions, thresholds):
        norm = math.hypot(dx, dy)
        if norm == 0:
            raise ArgumentError("direction must be a nonzero vector")
        if r <= 0:
            raise ArgumentError("threshold radii must be positive")
        key = (round(dx / norm, 12), round(dy / norm, 12))
        if key in seen:
            raise ArgumentError(f"duplicate direction {key}")
        seen.add(key)
        points.append(Chromaticity(cx + r * dx / norm, cy + r * dy / norm))
    return points


def fit_ellipse_fixed_center(
    points: Sequence[Chromaticity], center: Chromaticity | tuple[float, float]
) -> EllipseFitResult:
    """Least-squares conic through the points with the center held fixed."""
    if isinstance(center, Chromaticity):
        cx, cy = center.x, center.y
    else:
        cx, cy = center
    if len(points) < 4:
        raise InsufficientDataError(f"need >= 4 points, got {len(points)}")
    u = np.array([p.x - cx for p in points])
    v = np.array([p.y - cy for p in points])
    if np.any((u == 0) & (v == 0)):
        raise ArgumentError("a point coincides with the center")
    design = np.stack([u * u, u * v, v * v], axis=1)
    coef, *_ = np.linalg.lstsq(design, np.ones(len(points)), rcond=None)
    A, B, C = coef
    q = np.array([[A, B / 2.0], [B / 2.0, C]])
    eigvals, eigvecs = np.linalg.eigh(q)
    if eigvals[0] <= 0:
        raise FitFailureError("fitted conic is not an ellipse (indefinite quadratic form)")
    semi_major = 1.0 / math.sqrt(eigvals[0])
    semi_minor = 1.0 / math.sqrt(eigvals[1])
    angle = math.atan2(eigvecs[1, 0], eigvecs[0, 0])
    ellipse = Ellipse(Chromaticity(cx, cy), semi_major, semi_minor, angle)
    phi = np.arctan2(v, u)
    r_pts = np.hypot(u, v)
    residual = float(np.sqrt(np.mean((r_pts - ellipse_radius(ellipse, phi)) ** 2)))
    return EllipseFitResult(ellipse=ellipse, residual=residual, n_points=len(points))


def ellipse_radius(e: Ellipse, phi) -> np.ndarray:
    """Radius of the ellipse boundary at polar angle(s) phi about its center."""
    psi = np.asarray(phi, dtype=np.float64) - e.angle
    a, b = e.semi_major, e.semi_minor
    r = a * b / np.sqrt((b * np.cos(psi)) ** 2 + (a * np.sin(psi)) ** 2)
    return r


def ellipse_rmse(e1: Ellipse, e2: Ellipse, samples: int = OUTLINE_SAMPLES) -> float:
    """RMS of radial differences at ``samples`` equally spaced polar angles."""
    if not (
        math.isclose(e1.center.x, e2.center.x, abs_tol=1e-12)
        and math.isclose(e1.center.y, e2.center.y, abs_tol=1e-12)
    ):
        raise ArgumentError("ellipse comparison requires a shared center")
    phi = np.arange(samples) * (2.0 * math.pi / samples)
    diff = ellipse_radius(e1, phi) - ellipse_radius(e2, phi)
    return float(np.sqrt(np.mean(diff * diff)))


def scale_ellipse(e: Ellipse, factor: float) -> Ellipse:
    """Multiply both semi-axes by ``factor`` (used for visualization scaling)."""
    if factor <= 0:
        raise ArgumentError("scale factor must be positive")
    return Ellipse(e.center, e.semi_major * factor, e.semi_minor * factor, e.angle)


def ellipse_outline(e: Ellipse, samples: int = OUTLINE_SAMPLES) -> np.ndarray:
    """(samples, 2) boundary points for plot-data emission."""
    phi = np.arange(samples) * (2.0 * math.pi / samples)
    r = ellipse_radius(e, phi)
    return np.stack([e.center.x + r * np.cos(phi), e.center.y + r * np.sin(phi)], axis=1)


@dataclass(frozen=True)
class MetricEllipseResult:
    result: EllipseFitResult
    radii: dict[tuple[float, float], float]  # direction -> threshold radius
    dropped: tuple[tuple[float, float], ...]  # directions that never crossed d_tau


def metric_ellipse(
    hue_curves: Sequence[ResponseCurve],
    fit: EqualizationFit,
    d_tau: float,
    center: Chromaticity | tuple[float, float] = WHITE_E,
) -> MetricEllipseResult:
    """Discrimination ellipse of a metric from its per-hue saturation curves.

    Each curve runs along one radial hue direction (identity radius first).
    The equalized curve is inverted at d_tau; directions whose curve never
    reaches d_tau are dropped, and at least 4 survivors are required.
    """
    radii: dict[tuple[float, float], float] = {}
    dropped: list[tuple[float, float]] = []
    for curve in hue_curves:
        if curve.direction is None:
            raise ArgumentError("hue curves must carry their radial direction")
        eq = curve.equalized
        if eq is None:
            eq = transduce(curve, fit).equalized
        smooth = isotonic_nondecreasing(eq)
        r = first_crossing(curve.thetas, smooth, d_tau)
        if math.isinf(r):
            dropped.append(curve.direction)
        else:
            radii[curve.direction] = r
    if len(radii) < 4:
        raise InsufficientDataError(
            f"only {len(radii)} hue directions crossed d_tau={d_tau}; need >= 4"
        )
    points = radial_threshold_points(list(radii.keys()), list(radii.values()), center)
    result = fit_ellipse_fixed_center(points, center)
    return MetricEllipseResult(result=result, radii=radii, dropped=tuple(dropped))
