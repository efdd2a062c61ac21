"""Sensitivities of humans and metrics per distortion family, and their ordering.

Human sensitivity is the reciprocal of the RMSE energy injected at the human
threshold intensity. Metric sensitivity is the initial slope of the
equalized response against distortion energy. Both land in 1/energy units,
so their per-family orderings can be compared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import AffineIQError, ArgumentError
from .imaging import ImageBuffer, rmse_energy
from .transduction import ResponseCurve
from .transforms import TransformSpec, ViewingGeometry, apply_transform

#: Family labels used in orderings; chromatic paths enter via their
#: red-green and yellow-blue axis directions only.
ORDERING_FAMILIES = ("scale", "rotation", "translation", "rg", "yb")

DEFAULT_SLOPE_POINTS = 5


@dataclass(frozen=True)
class SensitivityRecord:
    subject: str  # "human" or a metric name
    family: str
    sensitivity: float
    rank_basis: str  # "threshold-energy" | "slope"

    def __post_init__(self):
        if not (self.sensitivity > 0):
            raise ArgumentError("sensitivity must be positive")


def mean_energy(images: Sequence[ImageBuffer], specs: Sequence[TransformSpec], geom: ViewingGeometry) -> float:
    """Mean RMSE energy of the transforms over the images (specs are averaged)."""
    if not images or not specs:
        raise ArgumentError("need images and at least one spec")
    total = 0.0
    for spec in specs:
        for img in images:
            total += rmse_energy(img, apply_transform(img, spec, geom))
    return total / (len(specs) * len(images))


def human_sensitivity(
    family: str,
    specs_at_threshold: Sequence[TransformSpec],
    images: Sequence[ImageBuffer],
    geom: ViewingGeometry,
) -> SensitivityRecord:
    """1 / (mean energy at the human threshold intensity).

    ``specs_at_threshold`` holds the transform at the threshold intensity,
    one spec per symmetric direction (they are averaged). A zero energy
    (threshold at the identity) yields an infinite-sensitivity sentinel that
    ranks first.
    """
    energy = mean_energy(images, specs_at_threshold, geom)
    sensitivity = math.inf if energy == 0.0 else 1.0 / energy
    return SensitivityRecord(
        subject="human", family=family, sensitivity=sensitivity, rank_basis="threshold-energy"
    )


def metric_sensitivity(
    curve: ResponseCurve,
    energies: Sequence[float] | None = None,
    k_lowest: int = DEFAULT_SLOPE_POINTS,
    family: str | None = None,
) -> SensitivityRecord:
    """Initial slope of equalized response vs energy, through the origin.

    The least-squares line through the origin over the ``k_lowest``
    lowest-energy points estimates the small-distortion behavior.
    """
    if curve.equalized is None:
        raise ArgumentError("curve must be equalized before computing sensitivity")
    e = np.asarray(energies if energies is not None else curve.energies, dtype=np.float64)
    if e is None or e.shape != curve.thetas.shape:
        raise ArgumentError("energies must align with the curve grid")
    d = np.asarray(curve.equalized, dtype=np.float64)
    order = np.argsort(e, kind="stable")
    low = order[: max(k_lowest, 3)]
    if len(low) < 3:
        raise ArgumentError("need >= 3 low-energy points for a slope")
    ee, dd = e[low], d[low]
    denom = float(np.sum(ee * ee))
    if denom == 0.0:
        raise AffineIQError("all selected energies are zero; slope undefined")
    slope = float(np.sum(ee * dd)) / denom
    if not math.isfinite(slope) or slope <= 0:
        raise AffineIQError(f"non-usable sensitivity slope {slope}")
    return SensitivityRecord(
        subject=curve.metric,
        family=family or curve.family,
        sensitivity=slope,
        rank_basis="slope",
    )


def rank_families(records: Sequence[SensitivityRecord]) -> list[str]:
    """Families ordered from most to least sensitive."""
    return [r.family for r in sorted(records, key=lambda r: -r.sensitivity)]


def kendall_tau_distance(order_a: Sequence[str], order_b: Sequence[str]) -> int:
    """Number of discordant pairs between two rankings of the same items."""
    if set(order_a) != set(order_b) or len(order_a) != len(set(order_a)):
        raise ArgumentError("orderings must rank the same distinct items")
    pos_b = {item: i for i, item in enumerate(order_b)}
    count = 0
    for (i, a), (j, b) in combinations(enumerate(order_a), 2):
        if (i - j) * (pos_b[a] - pos_b[b]) < 0:
            count += 1
    return count


@dataclass(frozen=True)
class OrderingReport:
    human_order: tuple[str, ...]
    metric_order: tuple[str, ...]
    exact_match: bool
    kendall_distance: int
    geometric_over_chromatic_human: bool
    geometric_over_chromatic_metric: bool
    geometric_over_chromatic_preserved: bool
    rg_vs_yb_match: bool


def _geo_over_chrom(order: Sequence[str]) -> bool:
    geo = [order.index(f) for f in ("scale", "rotation", "translation") if f in order]
    chrom = [order.index(f) for f in ("rg", "yb") if f in order]
    if not geo or not chrom:
        return False
    return max(geo) < min(chrom)


def compare_orderings(
    human: Sequence[SensitivityRecord], metric: Sequence[SensitivityRecord]
) -> OrderingReport:
    """Agreement report between human and metric sensitivity orderings."""
    h_order = rank_families(human)
    m_order = rank_families(metric)
    if set(h_order) != set(m_order):
        raise ArgumentError(
            f"family sets differ: {sorted(h_order)} vs {sorted(m_order)}"
        )
    rg_yb = True
    if "rg" in h_order and "yb" in h_order:
        rg_yb = (h_order.index("rg") < h_order.index("yb")) == (
            m_order.index("rg") < m_order.index("yb")
        )
    h_geo = _geo_over_chrom(h_order)
    m_geo = _geo_over_chrom(m_order)
    return OrderingReport(
        human_order=tuple(h_order),
        metric_order=tuple(m_order),
        exact_match=h_order == m_order,
        kendall_distance=kendall_tau_distance(h_order, m_order),
        geometric_over_chromatic_human=h_geo,
        geometric_over_chromatic_metric=m_geo,
        geometric_over_chromatic_preserved=m_geo or not h_geo,
        rg_vs_yb_match=rg_yb,
    )
