"""Affine distortion families and their intensity grids.

Four families are supported: translation (degrees of visual angle), rotation
(degrees of arc), scale (dimensionless factor), and illuminant (target
chromaticity around the equal-energy white). Geometric families keep the
output size by mirror-padding, resampling, and cropping back; identity
intensities bypass resampling entirely and return the input bit-exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ArgumentError, ConfigError, UnsupportedFamilyError
from .imaging import (
    WHITE_E,
    XYZ_TO_RGB,
    Chromaticity,
    ImageBuffer,
    crop_center,
    linear_to_srgb,
    luminance,
    mosaic_pad,
    srgb_to_linear,
    xyz_of_chromaticity,
)

FAMILIES = ("translation", "rotation", "scale", "illuminant")
GEOMETRIC_FAMILIES = ("translation", "rotation", "scale")

ROTATION_LIMIT_DEG = 10.0
SCALE_LIMITS = (0.1, 2.0)

#: Axis directions for translation stimuli: right, left, down, up in pixel axes.
TRANSLATION_DIRECTIONS = ((1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0))


@dataclass(frozen=True)
class ViewingGeometry:
    """Conversion between visual angle and pixels.

    The value is a choice, not a measured constant; every physical-unit
    output records the geometry it was computed with.
    """

    pixels_per_degree: float = 32.0

    def __post_init__(self):
        if not (self.pixels_per_degree > 0):
            raise ArgumentError("pixels_per_degree must be positive")


@dataclass(frozen=True)
class TransformSpec:
    """One distortion: a family tag plus its intensity.

    theta is a float for geometric families and a chromaticity target (x, y)
    for illuminant. direction is the unit displacement direction for
    translation and the radial hue direction for illuminant paths.
    """

    family: str
    theta: float | tuple[float, float]
    direction: tuple[float, float] | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ArgumentError(f"unknown transform family '{self.family}'")
        if self.family == "illuminant":
            x, y = self.theta  # type: ignore[misc]
            Chromaticity(float(x), float(y))
            object.__setattr__(self, "theta", (float(x), float(y)))
        else:
            th = float(self.theta)  # type: ignore[arg-type]
            if self.family == "translation":
                if th < 0:
                    raise ArgumentError("translation theta must be >= 0")
                if th > 0 and self.direction is None:
                    raise ArgumentError("nonzero translation needs a direction")
            elif self.family == "rotation":
                if not -ROTATION_LIMIT_DEG <= th <= ROTATION_LIMIT_DEG:
                    raise ArgumentError(
                        f"rotation theta {th} outside [{-ROTATION_LIMIT_DEG}, {ROTATION_LIMIT_DEG}]"
                    )
            elif self.family == "scale":
                if not SCALE_LIMITS[0] <= th <= SCALE_LIMITS[1]:
                    raise ArgumentError(f"scale theta {th} outside {SCALE_LIMITS}")
            object.__setattr__(self, "theta", th)
        if self.direction is not None:
            dx, dy = self.direction
            norm = math.hypot(dx, dy)
            if norm == 0:
                raise ArgumentError("direction must be a nonzero vector")
            object.__setattr__(self, "direction", (dx / norm, dy / norm))

    @property
    def is_identity(self) -> bool:
        if self.family == "translation":
            return self.theta == 0.0
        if self.family == "rotation":
            return self.theta == 0.0
        if self.family == "scale":
            return self.theta == 1.0
        x, y = self.theta  # type: ignore[misc]
        return x == WHITE_E[0] and y == WHITE_E[1]

    @property
    def axis_value(self) -> float:
        """Scalar intensity used as the curve axis.

        Translation: degrees; rotation: |degrees| (both signs average onto
        one axis); scale: the factor; illuminant: radial distance of the
        target from the white center in xy units.
        """
        if self.family == "rotation":
            return abs(self.theta)  # type: ignore[arg-type]
        if self.family == "illuminant":
            x, y = self.theta  # type: ignore[misc]
            return math.hypot(x - WHITE_E[0], y - WHITE_E[1])
        return float(self.theta)  # type: ignore[arg-type]


def identity_spec(family: str) -> TransformSpec:
    if family == "translation":
        return TransformSpec("translation", 0.0)
    if family == "rotation":
        return TransformSpec("rotation", 0.0)
    if family == "scale":
        return TransformSpec("scale", 1.0)
    if family == "illuminant":
        return TransformSpec("illuminant", WHITE_E)
    raise ArgumentError(f"unknown transform family '{family}'")


def illuminant_gains(target) -> np.ndarray:
    """Per-channel linear-RGB gains sending gray to the target chromaticity.

    Gains are normalized to constant luminance: a gray pixel keeps its Y while
    moving to (x, y) = target. The white target (1/3, 1/3) yields (1, 1, 1).
    """
    if isinstance(target, Chromaticity):
        x, y = target.x, target.y
    else:
        x, y = target
        Chromaticity(float(x), float(y))
    xyz = np.array(xyz_of_chromaticity(float(x), float(y), Y=1.0))
    gains = XYZ_TO_RGB @ xyz
    if np.any(gains < 0):
        raise ArgumentError(
            f"target ({x}, {y}) is outside the displayable gamut (negative gain)"
        )
    return gains


def apply_illuminant(img: ImageBuffer, target) -> ImageBuffer:
    """Desaturate to relative-luminance gray, then shift to the target chromaticity.

    Operates in linear RGB; the result is clipped to [0, 1] and re-encoded.
    """
    if img.channels != 3:
        raise UnsupportedFamilyError("illuminant changes require a 3-channel image")
    gains = illuminant_gains(target)
    lin = srgb_to_linear(img)
    gray = luminance(lin)
    out = np.clip(gray[:, :, np.newaxis] * gains[np.newaxis, np.newaxis, :], 0.0, 1.0)
    return linear_to_srgb(ImageBuffer(out, linear=True))


def _pad_by(img: ImageBuffer, margin: int) -> ImageBuffer:
    # mosaic_pad caps the margin at the image size; larger margins are
    # reached by repeated reflection.
    while margin > 0:
        step = min(margin, min(img.width, img.height))
        img = mosaic_pad(img, step)
        margin -= step
    return img


def _required_margin(img: ImageBuffer, spec: TransformSpec, geom: ViewingGeometry) -> int:
    if spec.family == "translation":
        return int(math.ceil(spec.theta * geom.pixels_per_degree)) + 2
    if spec.family == "rotation":
        radius = 0.5 * math.hypot(img.width, img.height)
        pull = 2.0 * radius * math.sin(math.radians(abs(spec.theta)) / 2.0)
        return int(math.ceil(pull)) + 2
    if spec.family == "scale":
        f = spec.theta
        if f >= 1.0:
            return 2
        return int(math.ceil(0.5 * max(img.width, img.height) * (1.0 / f - 1.0))) + 2
    return 0


def _resample(img: ImageBuffer, matrix: np.ndarray, offset: np.ndarray) -> ImageBuffer:
    out = np.empty_like(img.data)
    for c in range(img.channels):
        ndimage.affine_transform(
            img.data[:, :, c],
            matrix,
            offset=offset,
            output=out[:, :, c],
            order=1,
            mode="nearest",
            prefilter=False,
        )
    # bilinear output is a convex combination of inputs; clip float dust only
    return ImageBuffer(np.clip(out, 0.0, 1.0), linear=img.linear)


def apply_transform(img: ImageBuffer, spec: TransformSpec, geom: ViewingGeometry) -> ImageBuffer:
    """Apply one distortion, preserving the image dimensions.

    Geometric families mirror-pad, resample (bilinear), and crop back to the
    input size. Identity intensities return the input unchanged. Illuminant
    specs delegate to apply_illuminant.
    """
    if spec.family == "illuminant" and img.channels != 3:
        raise UnsupportedFamilyError("illuminant changes require a 3-channel image")
    if spec.is_identity:
        return img
    if spec.family == "illuminant":
        return apply_illuminant(img, spec.theta)

    w, h = img.width, img.height
    margin = _required_margin(img, spec, geom)
    padded = _pad_by(img, margin)
    # center of the padded raster in (row, col) coordinates
    cy = (padded.height - 1) / 2.0
    cx = (padded.width - 1) / 2.0
    center = np.array([cy, cx])

    if spec.family == "translation":
        shift_px = spec.theta * geom.pixels_per_degree
        dx, dy = spec.direction  # content moves by (dx, dy) * shift_px
        matrix = np.eye(2)
        offset = np.array([-dy * shift_px, -dx * shift_px])
    elif spec.family == "rotation":
        a = math.radians(spec.theta)
        # output pixel samples the input rotated by -theta about the center
        rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
        matrix = rot
        offset = center - rot @ center
    else:  # scale
        f = spec.theta
        matrix = np.eye(2) / f
        offset = center - center / f

    resampled = _resample(padded, matrix, offset)
    return crop_center(resampled, w, h)


@dataclass(frozen=True)
class GridConfig:
    """Parameters of the intensity grids applied to every stimulus image."""

    rotation_max: float = 10.0
    rotation_step: float = 0.1
    translation_max_deg: float = 0.3
    translation_steps: int = 15
    scale_min: float = 0.1
    scale_max: float = 2.0
    base_size: int = 64
    hue_count: int = 20
    saturation_steps: int = 8
    saturation_max: float = 0.08
    scale_one_sided: bool = True

    def __post_init__(self):
        if self.rotation_step <= 0 or self.rotation_max <= 0:
            raise ConfigError("rotation grid needs positive max and step")
        if self.rotation_max > ROTATION_LIMIT_DEG:
            raise ConfigError(f"rotation_max exceeds the {ROTATION_LIMIT_DEG} degree limit")
        if self.translation_max_deg <= 0 or self.translation_steps < 1:
            raise ConfigError("translation grid needs a positive range and step count")
        if not SCALE_LIMITS[0] <= self.scale_min < self.scale_max <= SCALE_LIMITS[1]:
            raise ConfigError(f"scale range must be increasing within {SCALE_LIMITS}")
        if self.base_size < 2 or self.base_size % 2 != 0:
            raise ConfigError("base_size must be an even integer (identity must be on the grid)")
        if self.hue_count < 4 or self.saturation_steps < 1:
            raise ConfigError("illuminant grid needs >= 4 hues and >= 1 saturation step")
        if self.saturation_max <= 0:
            raise ConfigError("saturation_max must be positive")
        white_margin = min(WHITE_E[0], WHITE_E[1], 1 - WHITE_E[0] - WHITE_E[1])
        if self.saturation_max >= white_margin:
            raise ConfigError("saturation_max pushes targets outside the xy triangle")


def hue_direction(index: int, count: int) -> tuple[float, float]:
    """Unit direction of hue ``index`` out of ``count`` equally spaced angles."""
    ang = 2.0 * math.pi * index / count
    return (math.cos(ang), math.sin(ang))


def hue_path(index: int, cfg: GridConfig) -> list[TransformSpec]:
    """Identity plus the saturation steps along one hue direction."""
    d = hue_direction(index, cfg.hue_count)
    specs = [identity_spec("illuminant")]
    for k in range(1, cfg.saturation_steps + 1):
        r = cfg.saturation_max * k / cfg.saturation_steps
        target = (WHITE_E[0] + r * d[0], WHITE_E[1] + r * d[1])
        specs.append(TransformSpec("illuminant", target, direction=d))
    return specs


def theta_grid(family: str, cfg: GridConfig) -> list[TransformSpec]:
    """The intensity grid of one family.

    rotation: [-max, max] in uniform steps including 0. translation: identity
    plus each amplitude along the four axis directions (symmetric directions
    are averaged later). scale: only factors giving an even resized image,
    so no half-pixel recentering is forced. illuminant: hue_count directions
    with saturation_steps radii each (the identity is shared and supplied by
    hue_path where per-direction curves are built).
    """
    if family == "rotation":
        n = int(round(cfg.rotation_max / cfg.rotation_step))
        if abs(n * cfg.rotation_step - cfg.rotation_max) > 1e-9:
            raise ConfigError("rotation_max must be a multiple of rotation_step")
        thetas = [i * cfg.rotation_step for i in range(-n, n + 1)]
        return [TransformSpec("rotation", round(t, 10)) for t in thetas]
    if family == "translation":
        specs = [identity_spec("translation")]
        for k in range(1, cfg.translation_steps + 1):
            th = cfg.translation_max_deg * k / cfg.translation_steps
            for d in TRANSLATION_DIRECTIONS:
                specs.append(TransformSpec("translation", th, direction=d))
        return specs
    if family == "scale":
        base = cfg.base_size
        lo = int(math.ceil(cfg.scale_min * base))
        hi = int(math.floor(cfg.scale_max * base))
        factors = []
        for n in range(lo + (lo % 2), hi + 1, 2):
            f = n / base
            if cfg.scale_min <= f <= cfg.scale_max:
                factors.append(f)
        if 1.0 not in factors:
            raise ConfigError("scale grid missing the identity factor")
        if cfg.scale_one_sided:
            factors = [f for f in factors if f >= 1.0]
        return [TransformSpec("scale", f) for f in factors]
    if family == "illuminant":
        specs = []
        for h in range(cfg.hue_count):
            specs.extend(hue_path(h, cfg)[1:])
        return specs
    raise ArgumentError(f"unknown transform family '{family}'")
