import math

import numpy as np
import pytest

from affineiq.errors import ArgumentError
from affineiq.sensitivity import (
    SensitivityRecord,
    compare_orderings,
    human_sensitivity,
    kendall_tau_distance,
    mean_energy,
    metric_sensitivity,
    rank_families,
)
from affineiq.transduction import ResponseCurve
from affineiq.transforms import TransformSpec, ViewingGeometry, identity_spec

from conftest import random_image

GEOM = ViewingGeometry(pixels_per_degree=10.0)


def curve_from_energy(energies, values, metric="m", family="rotation"):
    return ResponseCurve(
        metric=metric,
        family=family,
        thetas=np.arange(len(energies), dtype=float),
        raw=np.asarray(values, dtype=float),
        n_images=1,
        equalized=np.asarray(values, dtype=float),
        energies=np.asarray(energies, dtype=float),
    )


class TestHumanSensitivity:
    def test_reciprocal_of_energy(self, rng):
        images = [random_image(rng, 20, 20, 1) for _ in range(3)]
        spec = TransformSpec("rotation", 4.0)
        rec = human_sensitivity("rotation", [spec], images, GEOM)
        e = mean_energy(images, [spec], GEOM)
        assert rec.sensitivity == pytest.approx(1.0 / e)
        assert rec.rank_basis == "threshold-energy"

    def test_doubling_energy_halves_sensitivity(self):
        a = SensitivityRecord("human", "rotation", 1.0 / 0.2, "threshold-energy")
        b = SensitivityRecord("human", "rotation", 1.0 / 0.4, "threshold-energy")
        assert a.sensitivity == pytest.approx(2 * b.sensitivity)

    def test_identity_threshold_gives_infinite_sentinel(self, rng):
        images = [random_image(rng, 16, 16, 1)]
        rec = human_sensitivity("rotation", [identity_spec("rotation")], images, GEOM)
        assert math.isinf(rec.sensitivity)
        other = SensitivityRecord("human", "scale", 100.0, "threshold-energy")
        assert rank_families([other, rec]) == ["rotation", "scale"]


class TestMetricSensitivity:
    def test_linear_curve_slope_exact(self):
        e = np.linspace(0, 0.5, 11)
        for k in (3, 5, 8):
            rec = metric_sensitivity(curve_from_energy(e, 2.5 * e), k_lowest=k)
            assert rec.sensitivity == pytest.approx(2.5, rel=1e-12)

    def test_double_curve_doubles_sensitivity(self):
        e = np.linspace(0, 0.5, 11)
        d = 1.7 * e + 0.03 * e**2
        s1 = metric_sensitivity(curve_from_energy(e, d)).sensitivity
        s2 = metric_sensitivity(curve_from_energy(e, 2 * d)).sensitivity
        assert s2 == pytest.approx(2 * s1, rel=1e-12)

    def test_theta_reparameterization_insensitive(self):
        # same (energy, D) relation sampled on a warped theta grid
        e = np.linspace(0, 0.4, 12)
        d = 2.0 * e + 0.5 * e**2
        s1 = metric_sensitivity(curve_from_energy(e, d)).sensitivity
        # warp: drop/duplicate sampling density but keep low-energy points
        e2 = np.concatenate([e[:6], e[6::2]])
        d2 = 2.0 * e2 + 0.5 * e2**2
        s2 = metric_sensitivity(curve_from_energy(e2, d2)).sensitivity
        assert abs(s2 - s1) / s1 < 0.02

    def test_slope_ordering_matches_reciprocal_energy_for_linear(self, rng):
        # for curves linear in energy, slope ordering equals the ordering of
        # 1/energy-at-threshold
        slopes = {"rotation": 1.5, "scale": 4.0, "translation": 0.7}
        records_slope = []
        records_recip = []
        d_tau = 0.3
        for fam, c in slopes.items():
            e = np.linspace(0, 0.5, 11)
            records_slope.append(
                metric_sensitivity(curve_from_energy(e, c * e, family=fam), family=fam)
            )
            e_at_tau = d_tau / c
            records_recip.append(
                SensitivityRecord("human", fam, 1.0 / e_at_tau, "threshold-energy")
            )
        assert rank_families(records_slope) == rank_families(records_recip)

    def test_requires_equalized(self):
        c = curve_from_energy([0, 0.1, 0.2], [0, 0.1, 0.2])
        c = ResponseCurve(
            metric="m", family="rotation", thetas=c.thetas, raw=c.raw, n_images=1, energies=c.energies
        )
        with pytest.raises(ArgumentError):
            metric_sensitivity(c)


class TestCompareOrderings:
    H = [
        SensitivityRecord("human", f, s, "threshold-energy")
        for f, s in [("scale", 5), ("rotation", 4), ("translation", 3), ("rg", 2), ("yb", 1)]
    ]

    def metric_records(self, order):
        return [
            SensitivityRecord("m", f, float(len(order) - i), "slope")
            for i, f in enumerate(order)
        ]

    def test_identical_exact_match(self):
        rep = compare_orderings(self.H, self.metric_records(["scale", "rotation", "translation", "rg", "yb"]))
        assert rep.exact_match
        assert rep.kendall_distance == 0
        assert rep.geometric_over_chromatic_preserved
        assert rep.rg_vs_yb_match

    def test_reversed_distance_ten(self):
        rep = compare_orderings(self.H, self.metric_records(["yb", "rg", "translation", "rotation", "scale"]))
        assert not rep.exact_match
        assert rep.kendall_distance == 10
        assert not rep.geometric_over_chromatic_metric
        assert not rep.rg_vs_yb_match

    def test_antisymmetric_under_reversal(self):
        order = ["scale", "rotation", "translation", "rg", "yb"]
        n_pairs = 10
        d1 = kendall_tau_distance(order, order[::-1])
        d2 = kendall_tau_distance(order[::-1], order)
        assert d1 == d2 == n_pairs

    def test_partial_agreement(self):
        rep = compare_orderings(self.H, self.metric_records(["scale", "translation", "rotation", "yb", "rg"]))
        assert not rep.exact_match
        assert rep.kendall_distance == 2
        assert rep.geometric_over_chromatic_metric
        assert not rep.rg_vs_yb_match

    def test_mismatched_sets_rejected(self):
        with pytest.raises(ArgumentError):
            compare_orderings(self.H, self.metric_records(["scale", "rotation", "translation", "rg", "shear"]))
