"""Image buffers, PNG I/O, padding/cropping, and color math.

All stimuli are carried as :class:`ImageBuffer`: row-major float64 samples in
[0, 1], display-referred sRGB unless flagged ``linear``. Every operation here
is a pure function returning a new buffer; buffers are immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ArgumentError, DecodeError

# sRGB primaries with an equal-energy white point. Gray pixels then sit at
# chromaticity (1/3, 1/3), the neutral center used for all chromatic paths.
SRGB_PRIMARIES_XY = ((0.64, 0.33), (0.30, 0.60), (0.15, 0.06))
WHITE_E = (1.0 / 3.0, 1.0 / 3.0)


@dataclass(frozen=True)
class Chromaticity:
    """A point in the CIE xy chromaticity diagram."""

    x: float
    y: float

    def __post_init__(self):
        if not (self.x > 0 and self.y > 0 and self.x + self.y < 1):
            raise ArgumentError(
                f"chromaticity ({self.x}, {self.y}) outside the valid triangle"
            )

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class ImageBuffer:
    """Float raster in [0, 1] with shape (height, width, channels).

    channels is 1 (grayscale) or 3 (RGB). Samples are display-referred
    (sRGB-encoded) unless ``linear`` is set.
    """

    data: np.ndarray
    linear: bool = False

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ArgumentError(f"expected (h, w, 1|3) samples, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ArgumentError("empty image")
        if not np.all(np.isfinite(arr)):
            raise ArgumentError("image contains non-finite samples")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ArgumentError("image samples outside [0, 1]")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def load_image(path) -> ImageBuffer:
    """Load an 8- or 16-bit PNG, scaled to [0, 1]. Grayscale loads as 1 channel."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            fmt = im.format
            mode = im.mode
            if fmt != "PNG":
                raise DecodeError(f"{path}: not a PNG file (format={fmt})")
            if mode in ("RGBA", "P", "LA"):
                im = im.convert("RGB" if mode != "LA" else "L")
                mode = im.mode
            arr = np.asarray(im)
    except DecodeError:
        raise
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"{path}: cannot decode ({exc})") from exc

    if mode == "L":
        data = arr.astype(np.float64) / 255.0
    elif mode == "RGB":
        data = arr.astype(np.float64) / 255.0
    elif mode in ("I", "I;16"):
        if arr.max(initial=0) > 65535:
            raise DecodeError(f"{path}: unsupported bit depth (>16-bit samples)")
        data = arr.astype(np.float64) / 65535.0
    else:
        raise DecodeError(f"{path}: unsupported PNG mode '{mode}'")
    return ImageBuffer(data)


def save_image(img: ImageBuffer, path) -> None:
    """Write an 8-bit PNG. Sample v maps to round(v * 255)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr8 = np.clip(np.rint(img.data * 255.0), 0, 255).astype(np.uint8)
    if img.channels == 1:
        Image.fromarray(arr8[:, :, 0], mode="L").save(path, format="PNG")
    else:
        Image.fromarray(arr8, mode="RGB").save(path, format="PNG")


def to_rgb(img: ImageBuffer) -> ImageBuffer:
    """Replicate a single channel to 3; 3-channel input is returned unchanged."""
    if img.channels == 3:
        return img
    return ImageBuffer(np.repeat(img.data, 3, axis=2), linear=img.linear)


def mosaic_pad(img: ImageBuffer, margin: int) -> ImageBuffer:
    """Mirror-pad by ``margin`` pixels on every side.

    The border is the mirror reflection of the interior across each edge
    (edge sample not repeated), so padding introduces no new sample values
    and crop_center undoes it exactly.
    """
    if margin < 0:
        raise ArgumentError("margin must be >= 0")
    if margin > min(img.width, img.height):
        raise ArgumentError(
            f"margin {margin} exceeds image size {img.width}x{img.height}"
        )
    if margin == 0:
        return img
    padded = np.pad(img.data, ((margin, margin), (margin, margin), (0, 0)), mode="reflect")
    return ImageBuffer(padded, linear=img.linear)


def pad_black(img: ImageBuffer, target_w: int, target_h: int) -> ImageBuffer:
    """Center the image on a zero canvas of the target size (ties go top-left)."""
    if target_w < img.width or target_h < img.height:
        raise ArgumentError(
            f"target {target_w}x{target_h} smaller than input {img.width}x{img.height}"
        )
    if target_w == img.width and target_h == img.height:
        return img
    canvas = np.zeros((target_h, target_w, img.channels), dtype=np.float64)
    oy = (target_h - img.height) // 2
    ox = (target_w - img.width) // 2
    canvas[oy : oy + img.height, ox : ox + img.width] = img.data
    return ImageBuffer(canvas, linear=img.linear)


def crop_center(img: ImageBuffer, w: int, h: int) -> ImageBuffer:
    """Return the central w x h region (ties toward top-left)."""
    if w > img.width or h > img.height:
        raise ArgumentError(
            f"crop {w}x{h} larger than image {img.width}x{img.height}"
        )
    if w < 1 or h < 1:
        raise ArgumentError("crop size must be positive")
    oy = (img.height - h) // 2
    ox = (img.width - w) // 2
    return ImageBuffer(img.data[oy : oy + h, ox : ox + w], linear=img.linear)


def srgb_to_linear(img: ImageBuffer) -> ImageBuffer:
    """Apply the sRGB electro-optical transfer function per sample."""
    v = img.data
    out = np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)
    return ImageBuffer(out, linear=True)


def linear_to_srgb(img: ImageBuffer) -> ImageBuffer:
    """Inverse of srgb_to_linear; round-trip error is below 1e-6 per sample."""
    v = img.data
    out = np.where(v <= 0.0031308, v * 12.92, 1.055 * v ** (1.0 / 2.4) - 0.055)
    out = np.clip(out, 0.0, 1.0)
    return ImageBuffer(out, linear=False)


def rmse_energy(a: ImageBuffer, b: ImageBuffer) -> float:
    """Root-mean-square difference over all samples (per-sample normalization).

    Per-sample RMS keeps energies comparable across image sizes so orderings
    can be compared between datasets.
    """
    if a.data.shape != b.data.shape:
        raise ArgumentError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    diff = a.data - b.data
    return float(math.sqrt(np.mean(diff * diff)))


def xyz_of_chromaticity(x: float, y: float, Y: float = 1.0) -> tuple[float, float, float]:
    """XYZ tristimulus of chromaticity (x, y) at luminance Y."""
    return (x * Y / y, Y, (1.0 - x - y) * Y / y)


def _rgb_to_xyz_matrix() -> np.ndarray:
    prim = np.empty((3, 3))
    for i, (x, y) in enumerate(SRGB_PRIMARIES_XY):
        prim[:, i] = (x / y, 1.0, (1.0 - x - y) / y)
    white = np.array(xyz_of_chromaticity(*WHITE_E, Y=1.0))
    scale = np.linalg.solve(prim, white)
    return prim * scale


#: Linear RGB -> XYZ for sRGB primaries normalized to equal-energy white.
RGB_TO_XYZ = _rgb_to_xyz_matrix()
XYZ_TO_RGB = np.linalg.inv(RGB_TO_XYZ)
#: Relative-luminance weights of linear RGB (the Y row; sums to 1).
LUMA_WEIGHTS = RGB_TO_XYZ[1].copy()


def chromaticity_of_xyz(X: float, Y: float, Z: float) -> tuple[float, float]:
    s = X + Y + Z
    if s <= 0:
        raise ArgumentError("zero tristimulus sum has no chromaticity")
    return (X / s, Y / s)


def luminance(img: ImageBuffer) -> np.ndarray:
    """Relative luminance map of a linear 3-channel buffer (or the channel itself)."""
    if not img.linear:
        raise ArgumentError("luminance is defined on linear buffers")
    if img.channels == 1:
        return img.data[:, :, 0].copy()
    return np.tensordot(img.data, LUMA_WEIGHTS, axes=([2], [0]))
