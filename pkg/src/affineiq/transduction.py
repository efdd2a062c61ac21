"""Response curves, equalization to the common distance scale, and inversion.

A metric's response to a transform family is the mean distance over a set of
images at each intensity. An equalization function D = a * d^b, fitted on a
subjectively rated database, places every metric on the shared normalized
opinion scale; composing the two gives the transduction curve that is
inverted at the human threshold to obtain per-metric thresholds in physical
units.
"""

from __future__ import annotations

import math
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .errors import (
    ArgumentError,
    DegenerateScaleError,
    InsufficientDataError,
    MetricEvaluationError,
)
from .imaging import ImageBuffer, rmse_energy, save_image
from .metrics import MetricHandle, batch_distances, distance
from .transforms import TransformSpec, ViewingGeometry, apply_transform

IDENTITY_AXIS = {"translation": 0.0, "rotation": 0.0, "scale": 1.0, "illuminant": 0.0}

#: Exponent bounds of the equalization fit; keeps pathological adapters finite.
B_BOUNDS = (0.05, 5.0)


@dataclass
class ResponseCurve:
    """Mean metric distances over a theta grid for one metric/family/dataset."""

    metric: str
    family: str
    thetas: np.ndarray
    raw: np.ndarray
    n_images: int
    equalized: np.ndarray | None = None
    energies: np.ndarray | None = None
    dataset: str = ""
    direction: tuple[float, float] | None = None

    def __post_init__(self):
        self.thetas = np.asarray(self.thetas, dtype=np.float64)
        self.raw = np.asarray(self.raw, dtype=np.float64)
        if self.thetas.ndim != 1 or self.thetas.shape != self.raw.shape:
            raise ArgumentError("thetas and raw must be equal-length 1-D arrays")
        if len(self.thetas) < 2:
            raise ArgumentError("a response curve needs at least two grid points")
        if np.any(np.diff(self.thetas) <= 0):
            raise ArgumentError("thetas must be strictly increasing")
        if self.equalized is not None:
            self.equalized = np.asarray(self.equalized, dtype=np.float64)
            if self.equalized.shape != self.thetas.shape:
                raise ArgumentError("equalized length must match thetas")
        if self.energies is not None:
            self.energies = np.asarray(self.energies, dtype=np.float64)
            if self.energies.shape != self.thetas.shape:
                raise ArgumentError("energies length must match thetas")

    @property
    def identity_index(self) -> int:
        ident = IDENTITY_AXIS[self.family]
        idx = int(np.argmin(np.abs(self.thetas - ident)))
        if not math.isclose(self.thetas[idx], ident, abs_tol=1e-12):
            raise ArgumentError(f"curve grid does not contain the identity value {ident}")
        return idx


@dataclass(frozen=True)
class EqualizationFit:
    """Power-law map D = a * d^b onto the common [0, 1] opinion scale."""

    a: float
    b: float
    residual: float
    n_pairs: int

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ArgumentError("equalization requires a > 0 and b > 0")

    def apply(self, d) -> np.ndarray:
        d = np.asarray(d, dtype=np.float64)
        return self.a * np.power(d, self.b)

    def invert(self, level: float) -> float:
        return float((level / self.a) ** (1.0 / self.b))


@dataclass(frozen=True)
class ThresholdInterval:
    """Inverted threshold (center and quartile interval) in family units.

    Crossings beyond the measured curve are reported as math.inf: the metric
    is more invariant than humans over the tested range, an open-ended
    outcome rather than an error.
    """

    metric: str
    family: str
    dataset: str
    center: float
    lo: float
    hi: float
    pixels_per_degree: float
    d_tau: float

    def __post_init__(self):
        if not (self.lo <= self.center <= self.hi):
            raise ArgumentError("threshold interval must satisfy lo <= center <= hi")

    @property
    def open_ended(self) -> bool:
        return math.isinf(self.hi) or math.isinf(self.center) or math.isinf(self.lo)


def group_specs_by_axis(grid: Sequence[TransformSpec]) -> list[tuple[float, list[int]]]:
    """Group grid indices by scalar axis value, ascending.

    Symmetric intensities (left/right translation, +/- rotation) collapse to
    one axis value and are averaged. Scale factors below the identity are
    excluded: the threshold axis runs upward from the identity element.
    """
    groups: dict[float, list[int]] = {}
    family = grid[0].family
    ident = IDENTITY_AXIS[family]
    for i, spec in enumerate(grid):
        if spec.family != family:
            raise ArgumentError("mixed families in one grid")
        axis = spec.axis_value
        if axis < ident:
            continue
        groups.setdefault(axis, []).append(i)
    return sorted(groups.items())


def response_curve(
    metric: MetricHandle,
    images: Sequence[ImageBuffer],
    grid: Sequence[TransformSpec],
    geom: ViewingGeometry,
    dataset: str = "",
) -> ResponseCurve:
    """Mean distance d(i, T_theta(i)) over the images at each grid intensity.

    Mean RMSE energies are computed alongside so sensitivity analyses reuse
    the same transforms. Metric failures propagate with the theta index.
    """
    if not images or not grid:
        raise ArgumentError("response_curve needs images and a nonempty grid")
    groups = group_specs_by_axis(grid)
    family = grid[0].family
    if not any(math.isclose(ax, IDENTITY_AXIS[family], abs_tol=1e-12) for ax, _ in groups):
        raise ArgumentError("grid must contain the identity element")

    per_spec_mean = np.zeros(len(grid))
    per_spec_energy = np.zeros(len(grid))
    used = sorted({i for _, idxs in groups for i in idxs})
    if metric.kind == "external":
        with tempfile.TemporaryDirectory(prefix="affineiq-curve-") as td:
            pairs = []
            for i in used:
                for s, img in enumerate(images):
                    out = apply_transform(img, grid[i], geom)
                    ref_p = Path(td) / f"ref_{s:03d}.png"
                    if not ref_p.exists():
                        save_image(img, ref_p)
                    out_p = Path(td) / f"spec{i:04d}_img{s:03d}.png"
                    save_image(out, out_p)
                    pairs.append((ref_p, out_p))
                    per_spec_energy[i] += rmse_energy(img, out) / len(images)
            values = batch_distances(metric, pairs)
        k = 0
        for i in used:
            per_spec_mean[i] = float(np.mean(values[k : k + len(images)]))
            k += len(images)
    else:
        for i in used:
            spec = grid[i]
            acc = 0.0
            e_acc = 0.0
            for img in images:
                try:
                    out = apply_transform(img, spec, geom)
                    acc += distance(metric, img, out)
                except MetricEvaluationError as exc:
                    exc.index = i
                    raise
                e_acc += rmse_energy(img, out)
            per_spec_mean[i] = acc / len(images)
            per_spec_energy[i] = e_acc / len(images)

    thetas = np.array([ax for ax, _ in groups])
    raw = np.array([np.mean(per_spec_mean[idxs]) for _, idxs in groups])
    energies = np.array([np.mean(per_spec_energy[idxs]) for _, idxs in groups])
    direction = None
    if family == "illuminant":
        dirs = {grid[i].direction for i in used if grid[i].direction is not None}
        if len(dirs) == 1:
            direction = dirs.pop()
    return ResponseCurve(
        metric=metric.name,
        family=family,
        thetas=thetas,
        raw=raw,
        n_images=len(images),
        energies=energies,
        dataset=dataset,
        direction=direction,
    )


def normalize_dmos(mos: Sequence[float]) -> np.ndarray:
    """Map opinion scores to [0, 1] with 0 = invisible and 1 = worst.

    Input follows the TID convention (larger score = better quality), so
    D = (max - mos) / (max - min).
    """
    mos = np.asarray(mos, dtype=np.float64)
    if mos.size == 0:
        raise ArgumentError("empty opinion score list")
    lo, hi = float(mos.min()), float(mos.max())
    if hi <= lo:
        raise DegenerateScaleError("opinion scores are constant; no scale to normalize")
    return (hi - mos) / (hi - lo)


def fit_equalization(d: Sequence[float], D: Sequence[float]) -> EqualizationFit:
    """Least-squares fit of D = a * d^b over pairs with d > 0.

    Initialized from a log-log linear regression and refined by nonlinear
    least squares on the original scale; the refinement never increases the
    residual. The exponent is constrained to [0.05, 5].
    """
    d = np.asarray(d, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    if d.shape != D.shape or d.ndim != 1:
        raise ArgumentError("d and D must be equal-length 1-D sequences")
    if np.any(d < 0):
        raise ArgumentError("metric distances must be >= 0")
    if np.any((D < 0) | (D > 1)):
        raise ArgumentError("common-scale values must lie in [0, 1]")
    mask = d > 0
    if int(mask.sum()) < 3:
        raise InsufficientDataError(
            f"need at least 3 pairs with d > 0, got {int(mask.sum())}"
        )
    dp, Dp = d[mask], D[mask]

    both = Dp > 0
    if int(both.sum()) >= 2:
        slope, intercept = np.polyfit(np.log(dp[both]), np.log(Dp[both]), 1)
        b0 = float(np.clip(slope, *B_BOUNDS))
        a0 = float(np.exp(intercept))
    else:
        b0, a0 = 1.0, max(float(Dp.mean()) / max(float(dp.mean()), 1e-12), 1e-12)

    def residuals(p):
        log_a, b = p
        return np.exp(log_a + b * np.log(dp)) - Dp

    x0 = np.array([math.log(max(a0, 1e-300)), b0])
    sol = least_squares(
        residuals,
        x0,
        bounds=([-np.inf, B_BOUNDS[0]], [np.inf, B_BOUNDS[1]]),
        method="trf",
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
    )
    a, b = float(np.exp(sol.x[0])), float(sol.x[1])
    rms = float(np.sqrt(np.mean(residuals(sol.x) ** 2)))
    return EqualizationFit(a=a, b=b, residual=rms, n_pairs=int(mask.sum()))


def transduce(curve: ResponseCurve, fit: EqualizationFit) -> ResponseCurve:
    """Compose the response curve with the equalization map."""
    return replace(curve, equalized=fit.apply(curve.raw))


def isotonic_nondecreasing(values: Sequence[float]) -> np.ndarray:
    """Pool-adjacent-violators projection onto nondecreasing sequences."""
    y = np.asarray(values, dtype=np.float64).copy()
    w = np.ones_like(y)
    i = 0
    while i < len(y) - 1:
        if y[i] > y[i + 1]:
            tot = w[i] + w[i + 1]
            avg = (y[i] * w[i] + y[i + 1] * w[i + 1]) / tot
            y[i] = y[i + 1] = avg
            w[i] = w[i + 1] = tot
            j = i - 1
            while j >= 0 and y[j] > y[j + 1]:
                tot = w[j] + w[j + 1]
                avg = (y[j] * w[j] + y[j + 1] * w[j + 1]) / tot
                y[j] = y[j + 1] = avg
                w[j] = w[j + 1] = tot
                j -= 1
            i = max(j + 1, 0)
        else:
            i += 1
    # expand pooled blocks back to per-sample values
    out = np.empty_like(y)
    k = 0
    while k < len(y):
        m = k
        while m + 1 < len(y) and y[m + 1] == y[k]:
            m += 1
        out[k : m + 1] = y[k]
        k = m + 1
    return out


def first_crossing(thetas: np.ndarray, values: np.ndarray, level: float) -> float:
    """Theta of the first crossing of ``level`` on a nondecreasing curve.

    Linear interpolation between grid samples; math.inf if never reached.
    """
    if level <= values[0]:
        return float(thetas[0])
    above = np.nonzero(values >= level)[0]
    if len(above) == 0:
        return math.inf
    j = int(above[0])
    t = (level - values[j - 1]) / (values[j] - values[j - 1])
    return float(thetas[j - 1] + t * (thetas[j] - thetas[j - 1]))


def invert_threshold(
    curve: ResponseCurve,
    d_tau: float,
    quartiles: tuple[float, float],
    pixels_per_degree: float = 0.0,
) -> ThresholdInterval:
    """Map the common-scale threshold back to the family intensity axis.

    The equalized curve is isotonically smoothed first (sampled curves are
    noisy; transduction is monotone by assumption), then the first crossing
    of d_tau gives the center and the quartile levels give the interval.
    """
    if curve.equalized is None:
        raise ArgumentError("curve must be equalized before inversion")
    q_lo, q_hi = quartiles
    if not (q_lo <= d_tau <= q_hi):
        raise ArgumentError("quartiles must bracket d_tau")
    smooth = isotonic_nondecreasing(curve.equalized)
    return ThresholdInterval(
        metric=curve.metric,
        family=curve.family,
        dataset=curve.dataset,
        center=first_crossing(curve.thetas, smooth, d_tau),
        lo=first_crossing(curve.thetas, smooth, q_lo),
        hi=first_crossing(curve.thetas, smooth, q_hi),
        pixels_per_degree=pixels_per_degree,
        d_tau=d_tau,
    )


def metric_unit_threshold(fit: EqualizationFit, d_tau: float) -> float:
    """Invisibility threshold in the metric's own units: f^-1(d_tau)."""
    if d_tau <= 0:
        raise ArgumentError("d_tau must be positive")
    return fit.invert(d_tau)
